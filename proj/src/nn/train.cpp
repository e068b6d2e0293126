#include "qtopo/nn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "qtopo/errors.hpp"
#include "qtopo/parallel.hpp"
#include "qtopo/rng.hpp"

namespace qtopo::nn {

namespace {

int argmax(const double* p) {
    int best = 0;
    for (int k = 1; k < kClasses; ++k)
        if (p[k] > p[best]) best = k;
    return best;
}

Tensor batch_input(const Dataset& data, const std::vector<std::size_t>& idx, bool quaternion) {
    std::vector<const SpinTexture*> ptrs;
    ptrs.reserve(idx.size());
    for (std::size_t i : idx) ptrs.push_back(&data.samples[i].texture);
    return encode_batch(ptrs, quaternion);
}

}  // namespace

std::vector<std::array<double, kClasses>> predict(const Network& net, const Dataset& data, int batch) {
    const std::size_t n = data.samples.size();
    const std::size_t chunks = (n + batch - 1) / batch;
    std::vector<std::array<double, kClasses>> out(n);
    const bool quaternion = net.config().quaternion_input();
    parallel_for(chunks, [&](std::size_t c) {
        Network local(net);
        std::vector<std::size_t> idx;
        for (std::size_t i = c * batch; i < std::min(n, (c + 1) * batch); ++i) idx.push_back(i);
        Context ctx;
        const Tensor p = local.forward(batch_input(data, idx, quaternion), ctx);
        for (std::size_t b = 0; b < idx.size(); ++b)
            for (int k = 0; k < kClasses; ++k) out[idx[b]][k] = p.sample(static_cast<int>(b))[k];
    });
    return out;
}

EvalResult evaluate(const Network& net, const Dataset& data, int batch) {
    const auto probs = predict(net, data, batch);
    EvalResult r;
    r.total = static_cast<int>(data.samples.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const int truth = class_index(data.samples[i].texture.label);
        const int pred = argmax(probs[i].data());
        ++r.confusion[truth][pred];
        if (truth == pred) ++r.correct;
        r.loss -= std::log(std::max(probs[i][truth], 1e-300));
    }
    if (r.total) r.loss /= r.total;
    return r;
}

std::vector<EpochRecord> train(Network& net, const Dataset& train_set, const Dataset& validation,
                               const EpochCallback& on_epoch) {
    if (train_set.samples.empty()) throw ConfigError("empty training set");
    const ModelConfig& cfg = net.config();
    const bool quaternion = cfg.quaternion_input();
    Adam adam(cfg);
    std::vector<EpochRecord> curve;
    const std::size_t n = train_set.samples.size();
    std::vector<std::size_t> order(n);
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        adam.set_learning_rate(learning_rate_at(cfg, epoch));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(derive_seed(cfg.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        double loss_sum = 0.0;
        int correct = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            std::vector<int> labels;
            for (std::size_t i : idx) labels.push_back(class_index(train_set.samples[i].texture.label));
            Rng drop(derive_seed(cfg.seed, Stream::dropout, static_cast<std::uint64_t>(step++)));
            Context ctx{true, &drop};
            net.zero_grad();
            const Tensor probs = net.forward(batch_input(train_set, idx, quaternion), ctx);
            const double loss = net.backward(probs, labels);
            if (!std::isfinite(loss))
                throw NumericalError("training loss diverged in epoch " + std::to_string(epoch), -1);
            adam.step(net.parameters());
            loss_sum += loss * static_cast<double>(idx.size());
            for (std::size_t b = 0; b < idx.size(); ++b)
                if (argmax(probs.sample(static_cast<int>(b))) == labels[b]) ++correct;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        if (!validation.samples.empty()) {
            const EvalResult v = evaluate(net, validation);
            rec.val_loss = v.loss;
            rec.val_acc = v.accuracy();
        }
        curve.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return curve;
}

void write_curve_csv(const std::vector<EpochRecord>& curve, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw Error("cannot open " + path);
    std::fprintf(fp, "epoch,train_loss,train_acc,val_loss,val_acc\n");
    for (const auto& r : curve)
        std::fprintf(fp, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    if (std::fclose(fp) != 0) throw Error("write failed for " + path);
}

}  // namespace qtopo::nn
