#include "qtopo/pca.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "qtopo/parallel.hpp"
#include "qtopo/rng.hpp"

namespace qtopo {

namespace {

struct CsvFile {
    explicit CsvFile(const std::string& path) : fp(std::fopen(path.c_str(), "w")) {
        if (!fp) throw Error("cannot open " + path);
    }
    ~CsvFile() {
        if (fp) std::fclose(fp);
    }
    void close() {
        const int rc = std::fclose(fp);
        fp = nullptr;
        if (rc != 0) throw Error("write failed");
    }
    std::FILE* fp;
};

}  // namespace

PcaModel fit(const Eigen::MatrixXd& samples) {
    const Eigen::Index n = samples.rows();
    if (n < 2) throw DomainError("PCA needs at least two samples");
    PcaModel model;
    model.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& sigma = svd.singularValues();
    model.values = sigma.array().square() / static_cast<double>(n - 1);
    model.axes = svd.matrixV().transpose();
    // Relative to the data scale so rounding in the mean of identical rows gives rank 0.
    const double tol = samples.norm() * 1e-12 * static_cast<double>(std::max(n, samples.cols()));
    model.rank = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (sigma(i) > tol) ++model.rank;
    for (Eigen::Index r = 0; r < model.axes.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < model.axes.cols(); ++j)
            if (std::fabs(model.axes(r, j)) > std::fabs(model.axes(r, best))) best = j;
        if (model.axes(r, best) < 0.0) model.axes.row(r) *= -1.0;
    }
    return model;
}

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& sample, int n) {
    if (n < 0 || n > model.components()) throw DomainError("too many PCA components requested");
    return model.axes.topRows(n) * (sample - model.mean);
}

Eigen::MatrixXd project_all(const PcaModel& model, const Eigen::MatrixXd& samples, int n) {
    if (n < 0 || n > model.components()) throw DomainError("too many PCA components requested");
    return (samples.rowwise() - model.mean.transpose()) * model.axes.topRows(n).transpose();
}

Eigen::VectorXd reconstruct(const PcaModel& model, const Eigen::VectorXd& coords) {
    const auto n = coords.size();
    if (n > model.components()) throw DomainError("too many PCA coordinates");
    return model.mean + model.axes.topRows(n).transpose() * coords;
}

std::vector<PcaSample> build_pca_dataset(double sd, std::uint64_t seed, int length) {
    struct Recipe {
        int c;
        double m;
        int label;
    };
    std::vector<Recipe> recipes;
    for (int chern : {-3, -2, -1, 1, 2, 3})
        for (int i = 0; i < 30; ++i) recipes.push_back({std::abs(chern), chern > 0 ? 1.0 : -1.0, chern});
    for (int c : {1, 2, 3})
        for (double m : {-3.0, 3.0})
            for (int i = 0; i < 5; ++i) recipes.push_back({c, m, 0});

    std::vector<PcaSample> out(recipes.size());
    parallel_for(recipes.size(), [&](std::size_t i) {
        const Recipe& r = recipes[i];
        const std::uint64_t s = derive_seed(seed, Stream::pca, i);
        const HField h = add_h_noise(chern_hfield(r.c, r.m, length), sd, s);
        PcaSample& sample = out[i];
        sample.map = f_map(h);
        sample.map.c = r.c;
        sample.map.m = r.m;
        sample.map.noise_sd = sd;
        sample.map.seed = s;
        sample.label = r.label;
    });
    return out;
}

Eigen::MatrixXd stack_maps(const std::vector<PcaSample>& samples) {
    if (samples.empty()) return {};
    const Eigen::Index d = static_cast<Eigen::Index>(samples.front().map.values.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (static_cast<Eigen::Index>(samples[i].map.values.size()) != d)
            throw ConfigError("F maps differ in size");
        for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = samples[i].map.values[j];
    }
    return x;
}

std::vector<int> labels_of(const std::vector<PcaSample>& samples) {
    std::vector<int> labels;
    labels.reserve(samples.size());
    for (const auto& s : samples) labels.push_back(s.label);
    return labels;
}

ClusterReport cluster_report(const Eigen::MatrixXd& projections, const std::vector<int>& labels,
                             int groups) {
    if (static_cast<std::size_t>(projections.rows()) != labels.size())
        throw ConfigError("projection rows and labels differ in count");
    ClusterReport rep;
    rep.classes = labels;
    std::sort(rep.classes.begin(), rep.classes.end());
    rep.classes.erase(std::unique(rep.classes.begin(), rep.classes.end()), rep.classes.end());
    const int k = static_cast<int>(rep.classes.size());
    const Eigen::Index dim = projections.cols();
    const auto class_index = [&](int label) {
        return static_cast<int>(std::lower_bound(rep.classes.begin(), rep.classes.end(), label) -
                                rep.classes.begin());
    };

    rep.centroids = Eigen::MatrixXd::Zero(k, dim);
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int ci = class_index(labels[i]);
        rep.centroids.row(ci) += projections.row(static_cast<Eigen::Index>(i));
        ++counts[ci];
    }
    for (int ci = 0; ci < k; ++ci) rep.centroids.row(ci) /= counts[ci];

    rep.within.assign(k, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int ci = class_index(labels[i]);
        rep.within[ci] += (projections.row(static_cast<Eigen::Index>(i)) - rep.centroids.row(ci)).squaredNorm();
    }
    for (int ci = 0; ci < k; ++ci) rep.within[ci] = std::sqrt(rep.within[ci] / counts[ci]);

    rep.between = Eigen::MatrixXd::Zero(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) rep.between(a, b) = (rep.centroids.row(a) - rep.centroids.row(b)).norm();

    const auto nearest = [&](const Eigen::RowVectorXd& x, const Eigen::MatrixXd& centers) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < centers.rows(); ++r) {
            const double d = (x - centers.row(r)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(r);
            }
        }
        return best;
    };

    rep.confusion.assign(k, std::vector<int>(k, 0));
    rep.total = static_cast<int>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int truth = class_index(labels[i]);
        const int pred = nearest(projections.row(static_cast<Eigen::Index>(i)), rep.centroids);
        ++rep.confusion[truth][pred];
        if (truth == pred) ++rep.correct;
    }

    // Agglomerate class centroids; a group's centre is the mean of its
    // member centroids.
    std::vector<std::vector<int>> members(k);
    for (int ci = 0; ci < k; ++ci) members[ci] = {ci};
    const auto centre = [&](const std::vector<int>& g) {
        Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(dim);
        for (int ci : g) c += rep.centroids.row(ci);
        return Eigen::RowVectorXd(c / static_cast<double>(g.size()));
    };
    const int target = std::max(1, groups);
    while (static_cast<int>(members.size()) > target) {
        std::size_t ba = 0, bb = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                const double d = (centre(members[a]) - centre(members[b])).norm();
                if (d < best) {
                    best = d;
                    ba = a;
                    bb = b;
                }
            }
        rep.merge_distances.push_back(best);
        members[ba].insert(members[ba].end(), members[bb].begin(), members[bb].end());
        std::sort(members[ba].begin(), members[ba].end());
        members.erase(members.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    std::vector<int> group_of(k, 0);
    Eigen::MatrixXd group_centres(static_cast<Eigen::Index>(members.size()), dim);
    for (std::size_t g = 0; g < members.size(); ++g) {
        group_centres.row(static_cast<Eigen::Index>(g)) = centre(members[g]);
        std::vector<int> labels_in_group;
        for (int ci : members[g]) {
            group_of[ci] = static_cast<int>(g);
            labels_in_group.push_back(rep.classes[ci]);
        }
        rep.groups.push_back(labels_in_group);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int g = nearest(projections.row(static_cast<Eigen::Index>(i)), group_centres);
        if (g != group_of[class_index(labels[i])]) ++rep.group_errors;
    }
    return rep;
}

std::vector<std::pair<int, int>> ClusterReport::merged_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& g : groups)
        for (std::size_t a = 0; a < g.size(); ++a)
            for (std::size_t b = a + 1; b < g.size(); ++b) out.emplace_back(g[a], g[b]);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<int, int>> ClusterReport::confused_pairs() const {
    std::vector<std::pair<int, int>> out;
    const std::size_t k = classes.size();
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            if (confusion[a][b] > 0 || confusion[b][a] > 0) out.emplace_back(classes[a], classes[b]);
    return out;
}

void write_spectrum_csv(const PcaModel& model, const std::string& path, int count) {
    CsvFile f(path);
    std::fprintf(f.fp, "# preprocessing=%s sign_convention=%s\n", model.preprocessing.c_str(),
                 model.sign_convention.c_str());
    std::fprintf(f.fp, "index,lambda,lambda_over_lambda1\n");
    const double l1 = model.values.size() ? model.values(0) : 0.0;
    const Eigen::Index n = std::min<Eigen::Index>(count, model.values.size());
    for (Eigen::Index i = 0; i < n; ++i)
        std::fprintf(f.fp, "%lld,%.17g,%.17g\n", static_cast<long long>(i + 1), model.values(i),
                     l1 > 0.0 ? model.values(i) / l1 : 0.0);
    f.close();
}

void write_projections_csv(const Eigen::MatrixXd& projections, const std::vector<int>& labels,
                           const std::string& path) {
    CsvFile f(path);
    std::fprintf(f.fp, "sample,label");
    for (Eigen::Index j = 0; j < projections.cols(); ++j) std::fprintf(f.fp, ",PC%lld", static_cast<long long>(j + 1));
    std::fprintf(f.fp, "\n");
    for (Eigen::Index i = 0; i < projections.rows(); ++i) {
        std::fprintf(f.fp, "%lld,%d", static_cast<long long>(i), labels[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < projections.cols(); ++j) std::fprintf(f.fp, ",%.17g", projections(i, j));
        std::fprintf(f.fp, "\n");
    }
    f.close();
}

void write_confusion_csv(const ClusterReport& report, const std::string& path) {
    CsvFile f(path);
    std::fprintf(f.fp, "true\\predicted");
    for (int c : report.classes) std::fprintf(f.fp, ",%d", c);
    std::fprintf(f.fp, "\n");
    for (std::size_t a = 0; a < report.classes.size(); ++a) {
        std::fprintf(f.fp, "%d", report.classes[a]);
        for (int v : report.confusion[a]) std::fprintf(f.fp, ",%d", v);
        std::fprintf(f.fp, "\n");
    }
    f.close();
}

void write_groups_csv(const ClusterReport& report, const std::string& path) {
    CsvFile f(path);
    std::fprintf(f.fp, "group,labels,within_rms\n");
    for (std::size_t g = 0; g < report.groups.size(); ++g) {
        std::fprintf(f.fp, "%zu,", g);
        double worst = 0.0;
        for (std::size_t i = 0; i < report.groups[g].size(); ++i) {
            const int label = report.groups[g][i];
            std::fprintf(f.fp, i ? " %d" : "%d", label);
            const auto it = std::find(report.classes.begin(), report.classes.end(), label);
            worst = std::max(worst, report.within[static_cast<std::size_t>(it - report.classes.begin())]);
        }
        std::fprintf(f.fp, ",%.17g\n", worst);
    }
    std::fprintf(f.fp, "# merge distances:");
    for (double d : report.merge_distances) std::fprintf(f.fp, " %.17g", d);
    std::fprintf(f.fp, "\n# group errors: %d of %d\n", report.group_errors, report.total);
    f.close();
}

}  // namespace qtopo
