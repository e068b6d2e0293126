#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "qtopo/dataset.hpp"
#include "qtopo/nn/network.hpp"

namespace qtopo::nn {

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;  // running mean over the epoch, dropout active
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct EvalResult {
    int correct = 0;
    int total = 0;
    double loss = 0.0;
    std::array<std::array<int, kClasses>, kClasses> confusion{};  // [true][predicted]

    double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with Adam. Shuffling and dropout draw from substreams
// of the config seed, so a rerun reproduces the curve bit for bit.
std::vector<EpochRecord> train(Network& net, const Dataset& train_set, const Dataset& validation,
                               const EpochCallback& on_epoch = {});

EvalResult evaluate(const Network& net, const Dataset& data, int batch = 64);
std::vector<std::array<double, kClasses>> predict(const Network& net, const Dataset& data, int batch = 64);

void write_curve_csv(const std::vector<EpochRecord>& curve, const std::string& path);

}  // namespace qtopo::nn
