#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eof.hpp"
#include "error.hpp"
#include "test_support.hpp"

#include <Eigen/Dense>
#include <random>

using namespace yieldcast;

namespace {

FieldRaster survey(const std::vector<double>& v, const std::string& id, GridGeometry g = testsupport::grid(2, 3)) {
    return FieldRaster("ec", id, g, v);
}

Eigen::MatrixXd anomalies(const std::vector<FieldRaster>& s) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(s[0].size()), static_cast<Eigen::Index>(s.size()));
    for (std::size_t j = 0; j < s.size(); ++j)
        for (std::size_t i = 0; i < s[0].size(); ++i) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[j].value(i);
    a.colwise() -= a.rowwise().mean();
    return a;
}

}  // namespace

TEST_CASE("a scaled pair of surveys is rank one") {
    const std::vector<double> s{1.0, 4.0, 2.0, 8.0, 5.0, 7.0};
    std::vector<double> s2;
    for (double v : s) s2.push_back(2.0 * v);
    const auto eof = compute_eofs({survey(s, "1"), survey(s2, "2")}, 2);
    CHECK(eof.variance_fraction[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eof.variance_fraction[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identical surveys are degenerate") {
    const std::vector<double> s{1.0, 4.0, 2.0, 8.0, 5.0, 7.0};
    CHECK_THROWS_WITH_AS(compute_eofs({survey(s, "1"), survey(s, "2")}, 1), doctest::Contains("degenerate anomaly"),
                         ValidationError);
}

TEST_CASE("full reconstruction, orthogonality and ordering on a random stack") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto g = testsupport::grid(4, 5);
    std::vector<FieldRaster> stack;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> v(g.n_cells());
        for (auto& x : v) x = normal(rng);
        stack.push_back(survey(v, std::to_string(k), g));
    }
    const auto eof = compute_eofs(stack, 3);
    REQUIRE(eof.patterns.size() == 3);
    const Eigen::MatrixXd a = anomalies(stack);
    Eigen::MatrixXd p(a.rows(), 3);
    for (int j = 0; j < 3; ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) p(i, j) = eof.patterns[j].value(static_cast<std::size_t>(i));
    const Eigen::MatrixXd recon = p * eof.expansion_coefficients.transpose();
    CHECK((recon - a).cwiseAbs().maxCoeff() < 1e-10);

    // Two patterns suffice: anomalies of 3 surveys have rank 2.
    double total = 0.0;
    for (double f : eof.variance_fraction) total += f;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double dot = p.col(i).dot(p.col(j));
            if (i == j && eof.variance_fraction[i] > 1e-12) CHECK(dot == doctest::Approx(1.0).epsilon(1e-10));
            if (i != j && eof.variance_fraction[i] > 1e-12 && eof.variance_fraction[j] > 1e-12) CHECK(std::abs(dot) < 1e-8);
        }
    CHECK(eof.variance_fraction[0] >= eof.variance_fraction[1]);
    CHECK(eof.variance_fraction[1] >= eof.variance_fraction[2]);

    // Reconstruction error is nonincreasing in k.
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 3; ++k) {
        const Eigen::MatrixXd r = p.leftCols(k) * eof.expansion_coefficients.leftCols(k).transpose();
        const double err = (r - a).norm();
        CHECK(err <= previous + 1e-12);
        previous = err;
    }
}

TEST_CASE("sign convention puts the largest-magnitude cell positive") {
    const auto eof = compute_eofs({survey({0, 0, 0, 0, 0, 0}, "1"), survey({0, 0, -5, 1, 0, 0}, "2")}, 1);
    const auto& p = eof.patterns[0];
    std::size_t arg = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (std::abs(p.value(i)) > std::abs(p.value(arg))) arg = i;
    CHECK(p.value(arg) > 0.0);
}

TEST_CASE("errors: k too large, geometry mismatch, missing cells excluded") {
    const std::vector<double> a{1, 2, 3, 4, 5, 6}, b{2, 1, 3, 5, 4, 6};
    CHECK_THROWS_AS(compute_eofs({survey(a, "1"), survey(b, "2")}, 3), ValidationError);
    CHECK_THROWS_AS(compute_eofs({survey(a, "1"), survey({1, 2, 3, 4, 5, 6, 7, 8}, "2", testsupport::grid(2, 4))}, 1),
                    ValidationError);
    const FieldRaster holey("ec", "3", testsupport::grid(2, 3), {1, 2, 3, 4, 5, 6}, {1, 1, 0, 1, 1, 1});
    const auto eof = compute_eofs({survey(a, "1"), survey(b, "2"), holey}, 1);
    CHECK_FALSE(eof.patterns[0].present(2));
    CHECK(eof.patterns[0].present(0));
}
