#include "eof.hpp"

#include "error.hpp"

#include <cmath>

namespace yieldcast {

EofDecomposition compute_eofs(const std::vector<FieldRaster>& surveys, std::size_t k, const EofOptions& options) {
    if (surveys.size() < 2) throw ValidationError("EOF analysis needs at least two surveys");
    if (k == 0 || k > surveys.size())
        throw ValidationError("requested " + std::to_string(k) + " EOFs from " + std::to_string(surveys.size()) +
                              " surveys");
    const auto& geom = surveys.front().geometry();
    for (const auto& s : surveys)
        if (!(s.geometry() == geom))
            throw ValidationError("geometry mismatch: survey '" + s.time_label() + "' is " + s.geometry().describe());

    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < geom.n_cells(); ++i) {
        bool all = true;
        for (const auto& s : surveys) all = all && s.present(i);
        if (all) cells.push_back(i);
    }
    if (cells.size() < 2) throw ValidationError("fewer than two cells observed in every survey");

    const auto n_cells = static_cast<Eigen::Index>(cells.size());
    const auto n_surveys = static_cast<Eigen::Index>(surveys.size());
    Eigen::MatrixXd a(n_cells, n_surveys);
    for (Eigen::Index j = 0; j < n_surveys; ++j)
        for (Eigen::Index i = 0; i < n_cells; ++i) a(i, j) = surveys[static_cast<std::size_t>(j)].value(cells[static_cast<std::size_t>(i)]);

    if (options.standardize_surveys) {
        for (Eigen::Index j = 0; j < n_surveys; ++j) {
            auto col = a.col(j);
            const double mean = col.mean();
            const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n_cells - 1));
            if (!(sd > 0.0)) throw ValidationError("survey '" + surveys[static_cast<std::size_t>(j)].time_label() + "' is constant");
            col = (col.array() - mean) / sd;
        }
    }
    // Temporal anomalies: remove each cell's mean over surveys.
    const Eigen::VectorXd cell_mean = a.rowwise().mean();
    a.colwise() -= cell_mean;

    const double total = a.squaredNorm();
    const double scale = cell_mean.squaredNorm() + total;
    if (!(total > 1e-24 * std::max(1.0, scale))) throw ValidationError("degenerate anomaly: surveys are identical");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();

    EofDecomposition out;
    out.expansion_coefficients.resize(n_surveys, static_cast<Eigen::Index>(k));
    for (std::size_t p = 0; p < k; ++p) {
        const auto pi = static_cast<Eigen::Index>(p);
        Eigen::VectorXd u = svd.matrixU().col(pi);
        Eigen::VectorXd v = svd.matrixV().col(pi);
        Eigen::Index argmax = 0;
        u.cwiseAbs().maxCoeff(&argmax);
        if (u(argmax) < 0) {
            u = -u;
            v = -v;
        }
        std::vector<double> values(geom.n_cells(), 0.0);
        std::vector<std::uint8_t> present(geom.n_cells(), 0);
        for (Eigen::Index i = 0; i < n_cells; ++i) {
            values[cells[static_cast<std::size_t>(i)]] = u(i);
            present[cells[static_cast<std::size_t>(i)]] = 1;
        }
        out.patterns.emplace_back(surveys.front().variable_name() + "_eof" + std::to_string(p + 1),
                                  "EOF" + std::to_string(p + 1), geom, std::move(values), std::move(present));
        out.expansion_coefficients.col(pi) = v * sv(pi);
        out.variance_fraction.push_back(sv(pi) * sv(pi) / total);
    }
    return out;
}

}  // namespace yieldcast
