@dimensions two
@classLabel true a
@data
