#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <string>

#include "qtopo/errors.hpp"
#include "qtopo/pca.hpp"
#include "qtopo/rng.hpp"

using namespace qtopo;

namespace {

Eigen::MatrixXd gaussian(Rng& rng, int n, int d) {
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    return x;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("identical rows have no variance") {
    Eigen::MatrixXd x(7, 5);
    for (int i = 0; i < 7; ++i) x.row(i) << 0.1, -0.3, 2.7, 1e-3, 5.0;
    const PcaModel m = fit(x);
    CHECK(m.rank == 0);
    CHECK(m.values.cwiseAbs().maxCoeff() < 1e-28);
    CHECK_THROWS_AS(fit(x.topRows(1)), DomainError);
    CHECK_THROWS_AS(project(m, x.row(0).transpose(), 6), DomainError);
}

TEST_CASE("first axis follows the long direction") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const double angle = rng.uniform(0.0, std::numbers::pi);
        Eigen::Matrix2d rot;
        rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        Eigen::MatrixXd x = gaussian(rng, 4000, 2);
        x.col(0) *= 5.0;
        x = (x * rot.transpose()).eval();
        x.rowwise() += Eigen::RowVector2d(3.0, -1.0);
        const PcaModel m = fit(x);
        CHECK(m.rank == 2);
        CHECK(m.values(0) > m.values(1));
        const double cosine = std::fabs(m.axes.row(0).dot(Eigen::RowVector2d(std::cos(angle), std::sin(angle))));
        CHECK(std::acos(std::min(1.0, cosine)) * 180.0 / std::numbers::pi < 1.0);
        CHECK(m.values(0) == doctest::Approx(25.0).epsilon(0.1));
    }
}

TEST_CASE("PCA algebra") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 20 + static_cast<int>(rng.below(30)), d = 3 + static_cast<int>(rng.below(20));
        Eigen::MatrixXd x = gaussian(rng, n, d) * gaussian(rng, d, d);
        const PcaModel m = fit(x);
        const int k = m.components();
        CHECK(k == std::min(n, d));
        CHECK((m.axes * m.axes.transpose() - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
        for (int i = 1; i < k; ++i) CHECK(m.values(i) <= m.values(i - 1));
        for (int r = 0; r < k; ++r) {
            Eigen::Index best;
            m.axes.row(r).cwiseAbs().maxCoeff(&best);
            CHECK(m.axes(r, best) > 0.0);
        }
        const Eigen::MatrixXd p = project_all(m, x, k);
        const Eigen::MatrixXd cov = p.transpose() * p / static_cast<double>(n - 1);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
                const double expect = a == b ? m.values(a) : 0.0;
                CHECK(std::fabs(cov(a, b) - expect) < 1e-8 * std::max(1.0, m.values(0)));
            }
        if (n >= d)
            for (int i = 0; i < n; ++i) {
                const Eigen::VectorXd row = x.row(i).transpose();
                CHECK((reconstruct(m, project(m, row, k)) - row).cwiseAbs().maxCoeff() < 1e-8);
            }
        CHECK(project(m, m.mean, k).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("separated blobs cluster perfectly") {
    Rng rng(13);
    const std::vector<int> centres{-2, -1, 1, 2};
    Eigen::MatrixXd x(80, 3);
    std::vector<int> labels;
    for (int i = 0; i < 80; ++i) {
        const int c = centres[static_cast<std::size_t>(i % 4)];
        labels.push_back(c);
        x.row(i) << 10.0 * c + 0.1 * rng.normal(), c * c + 0.1 * rng.normal(), 0.1 * rng.normal();
    }
    const PcaModel m = fit(x);
    const ClusterReport r = cluster_report(project_all(m, x, 2), labels, 2);
    CHECK(r.correct == 80);
    CHECK(r.accuracy() == 1.0);
    CHECK(r.confused_pairs().empty());
    for (std::size_t a = 0; a < 4; ++a) CHECK(r.confusion[a][a] == 20);
    CHECK(r.groups.size() == 2);
    CHECK(r.merge_distances.size() == 2);
    CHECK(r.merged_pairs() == std::vector<std::pair<int, int>>{{-2, -1}, {1, 2}});
    CHECK(r.group_errors == 0);
    CHECK_THROWS_AS(cluster_report(project_all(m, x, 2), {1, 2}), ConfigError);
}

TEST_CASE("PCA dataset of F maps") {
    const std::vector<PcaSample> data = build_pca_dataset(0.0, 5, 12);
    REQUIRE(data.size() == 210);
    std::map<int, int> counts;
    for (const auto& s : data) {
        ++counts[s.label];
        if (s.label == 0) CHECK(s.map.max_abs() < 1e-9);
        else CHECK(s.map.max_abs() > 1e-3);
    }
    for (int c : {-3, -2, -1, 0, 1, 2, 3}) CHECK(counts[c] == 30);
    const std::vector<PcaSample> again = build_pca_dataset(0.1, 5, 12), same = build_pca_dataset(0.1, 5, 12);
    for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].map.values == same[i].map.values);
    const Eigen::MatrixXd x = stack_maps(data);
    CHECK(x.rows() == 210);
    CHECK(x.cols() == 144);
    CHECK(labels_of(data)[0] == -3);
    const PcaModel m = fit(x);
    const Eigen::MatrixXd p = project_all(m, x, 6);
    const ClusterReport r = cluster_report(p, labels_of(data));

    const std::string spec = "test_spectrum.csv", proj = "test_proj.csv", conf = "test_conf.csv",
                      groups = "test_groups.csv";
    write_spectrum_csv(m, spec, 10);
    write_projections_csv(p, labels_of(data), proj);
    write_confusion_csv(r, conf);
    write_groups_csv(r, groups);
    CHECK(count_lines(spec) == 12);
    CHECK(count_lines(proj) == 211);
    CHECK(count_lines(conf) >= 8);
    CHECK(count_lines(groups) >= 4);
    for (const auto& f : {spec, proj, conf, groups}) std::remove(f.c_str());
}
