@problemName X
@
@classLabel true a
@data
