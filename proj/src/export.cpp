#include "mtpool/export.hpp"

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mtpool {

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << contents;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& rows) {
    std::vector<std::array<double, 2>> out(rows.size(), {0.0, 0.0});
    if (rows.empty()) return out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != d) throw DimensionError("pca_2d: ragged rows");
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rows[i][j];
    }
    x.rowwise() -= x.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::MatrixXd& v = svd.matrixV();
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, v.cols()); ++k) {
        Eigen::VectorXd axis = v.col(k);
        Eigen::Index big = 0;
        axis.cwiseAbs().maxCoeff(&big);
        if (axis(big) < 0) axis = -axis;
        Eigen::VectorXd proj = x * axis;
        for (Eigen::Index i = 0; i < n; ++i) out[i][k] = proj(i);
    }
    return out;
}

std::vector<std::vector<double>> embeddings(MtpoolModel& model, const data::Dataset& dataset) {
    std::vector<std::vector<double>> out;
    for (const auto& s : dataset.samples) {
        ad::Tape tape;
        auto tr = model.forward(tape, s.series, ad::Mode::eval);
        auto v = tr.x_final.values();
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

std::filesystem::path pca_path(const std::filesystem::path& path) {
    auto p = path;
    p.replace_filename(path.stem().string() + "_pca" + path.extension().string());
    return p;
}

void export_embeddings(MtpoolModel& model, const data::Dataset& dataset, const std::filesystem::path& path) {
    const auto emb = embeddings(model, dataset);
    const std::size_t d = emb.empty() ? model.pooling().output_width() : emb.front().size();
    std::ostringstream csv;
    csv << "sample_index,label";
    for (std::size_t j = 0; j < d; ++j) csv << ",e" << j;
    csv << '\n';
    for (std::size_t i = 0; i < emb.size(); ++i) {
        csv << i << ',' << dataset.samples[i].label;
        for (double v : emb[i]) csv << ',' << format_double(v);
        csv << '\n';
    }
    const auto proj = pca_2d(emb);
    std::ostringstream pca;
    pca << "sample_index,label,pc1,pc2\n";
    for (std::size_t i = 0; i < proj.size(); ++i)
        pca << i << ',' << dataset.samples[i].label << ',' << format_double(proj[i][0]) << ','
            << format_double(proj[i][1]) << '\n';
    write_file_atomic(path, csv.str());
    write_file_atomic(pca_path(path), pca.str());
}

std::vector<LayerAssignment> argmax_assignments(MtpoolModel& model, const Tensor& series) {
    ad::Tape tape;
    auto tr = model.forward(tape, series, ad::Mode::eval);
    std::vector<LayerAssignment> out;
    for (const auto& layer : tr.pools) {
        const auto& s = layer.assignment.tensor();  // clusters x nodes
        const auto k = s.rows(), n = s.cols();
        LayerAssignment a;
        a.clusters = k;
        std::vector<bool> used(k, false);
        for (std::size_t node = 0; node < n; ++node) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (s(c, node) > s(best, node)) best = c;
            a.cluster_of_node.push_back(best);
            used[best] = true;
        }
        for (std::size_t c = 0; c < k; ++c)
            if (!used[c]) a.unused_clusters.push_back(c);
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<std::filesystem::path> export_assignments(MtpoolModel& model, const Tensor& series,
                                                      const std::filesystem::path& path) {
    const auto layers = argmax_assignments(model, series);
    const auto stem = path.stem().string();
    std::vector<std::filesystem::path> written;
    std::ostringstream unused;
    unused << "layer,cluster\n";
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::ostringstream csv;
        csv << "node,cluster\n";
        for (std::size_t i = 0; i < layers[l].cluster_of_node.size(); ++i)
            csv << i << ',' << layers[l].cluster_of_node[i] << '\n';
        for (auto c : layers[l].unused_clusters) unused << l << ',' << c << '\n';
        auto p = path;
        p.replace_filename(stem + "_layer" + std::to_string(l) + ".csv");
        write_file_atomic(p, csv.str());
        written.push_back(p);
    }
    auto p = path;
    p.replace_filename(stem + "_unused.csv");
    write_file_atomic(p, unused.str());
    written.push_back(p);
    return written;
}

std::string adjacency_csv(const Tensor& a) {
    if (a.rank() != 2 || a.rows() != a.cols()) throw DimensionError("adjacency must be square, got " + shape_str(a.shape));
    std::ostringstream csv;
    csv << "node";
    for (std::size_t j = 0; j < a.cols(); ++j) csv << ",n" << j;
    csv << '\n';
    for (std::size_t i = 0; i < a.rows(); ++i) {
        csv << i;
        for (std::size_t j = 0; j < a.cols(); ++j) csv << ',' << format_double(a(i, j));
        csv << '\n';
    }
    return csv.str();
}

Tensor sample_adjacency(MtpoolModel& model, const Tensor& series) {
    ad::Tape tape;
    auto tr = model.forward(tape, series, ad::Mode::eval);
    return tr.adjacency.tensor();
}

}  // namespace mtpool
