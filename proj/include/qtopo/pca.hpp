#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qtopo/eigenstate.hpp"

namespace qtopo {

struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd axes;  // one orthonormal axis per row, by descending value
    Eigen::VectorXd values;
    int rank = 0;
    std::string preprocessing = "mean-centered";
    std::string sign_convention = "largest-magnitude entry positive";

    int components() const { return static_cast<int>(axes.rows()); }
};

// Rows of samples are observations. Values use the 1/(N-1) covariance.
PcaModel fit(const Eigen::MatrixXd& samples);
Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& sample, int n);
Eigen::MatrixXd project_all(const PcaModel& model, const Eigen::MatrixXd& samples, int n);
Eigen::VectorXd reconstruct(const PcaModel& model, const Eigen::VectorXd& coords);

struct PcaSample {
    FMap map;
    int label = 0;
};

// 30 maps for each C in {-3..-1, 1..3} with c = |C|, m = sgn(C), then
// 5 trivial maps for each (c, m) in {1,2,3} x {-3, 3}. Noise of the given
// SD is added to h at every site.
std::vector<PcaSample> build_pca_dataset(double sd, std::uint64_t seed, int length = kDefaultLength);
Eigen::MatrixXd stack_maps(const std::vector<PcaSample>& samples);
std::vector<int> labels_of(const std::vector<PcaSample>& samples);

struct ClusterReport {
    std::vector<int> classes;              // sorted distinct labels
    Eigen::MatrixXd centroids;             // one row per class
    std::vector<double> within;            // RMS distance to own centroid
    Eigen::MatrixXd between;               // centroid distances
    std::vector<std::vector<int>> confusion;  // [true class][nearest centroid]
    int correct = 0;
    int total = 0;
    // Classes grouped by agglomerating the closest centroids.
    std::vector<std::vector<int>> groups;
    std::vector<double> merge_distances;
    // Samples whose nearest group centroid is not their own group.
    int group_errors = 0;

    double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
    // Label pairs sharing a group.
    std::vector<std::pair<int, int>> merged_pairs() const;
    // Label pairs with off-diagonal confusion.
    std::vector<std::pair<int, int>> confused_pairs() const;
};

ClusterReport cluster_report(const Eigen::MatrixXd& projections, const std::vector<int>& labels,
                             int groups = 4);

void write_spectrum_csv(const PcaModel& model, const std::string& path, int count = 16);
void write_projections_csv(const Eigen::MatrixXd& projections, const std::vector<int>& labels,
                           const std::string& path);
void write_confusion_csv(const ClusterReport& report, const std::string& path);
void write_groups_csv(const ClusterReport& report, const std::string& path);

}  // namespace qtopo
