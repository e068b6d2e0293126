#include <malloc.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "qtopo/chern.hpp"
#include "qtopo/dataset.hpp"
#include "qtopo/eigenstate.hpp"
#include "qtopo/errors.hpp"
#include "qtopo/nn/checkpoint.hpp"
#include "qtopo/nn/network.hpp"
#include "qtopo/nn/train.hpp"
#include "qtopo/parallel.hpp"
#include "qtopo/pca.hpp"

namespace fs = std::filesystem;
using namespace qtopo;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

struct UsageError : Error {
    using Error::Error;
};

std::string join(const fs::path& dir, const std::string& file) { return (dir / file).string(); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir + ": " + ec.message());
}

struct GenArgs {
    std::string kind;
    std::uint64_t seed = 42;
    std::string out = ".";
    double sd = 0.0;
    int length = kDefaultLength;
};

void cmd_gen(const GenArgs& a) {
    ensure_dir(a.out);
    const fs::path dir(a.out);
    std::vector<Dataset> sets;
    if (a.kind == "train") {
        TrainingSplit s = build_training(a.seed, a.length);
        sets.push_back(std::move(s.train));
        sets.push_back(std::move(s.validation));
    } else if (a.kind == "test") {
        sets.push_back(build_testing(a.seed, a.length));
    } else if (a.kind == "predict") {
        sets = build_prediction(a.seed, a.length);
    } else {
        const std::vector<PcaSample> data = build_pca_dataset(a.sd, a.seed, a.length);
        const std::string path = join(dir, "pca_maps.csv");
        std::ofstream out(path);
        if (!out) throw Error("cannot open " + path);
        out.precision(17);
        out << "# sd=" << a.sd << " seed=" << a.seed << " length=" << a.length << "\nlabel,c,m,seed";
        for (int i = 0; i < a.length * a.length; ++i) out << ",F" << i;
        out << '\n';
        for (const auto& s : data) {
            out << s.label << ',' << s.map.c << ',' << s.map.m << ',' << s.map.seed;
            for (double v : s.map.values) out << ',' << v;
            out << '\n';
        }
        if (!out) throw Error("write failed for " + path);
        std::printf("wrote %zu F maps to %s\n", data.size(), path.c_str());
        return;
    }
    std::vector<std::string> files;
    std::size_t total = 0;
    for (const Dataset& d : sets) {
        files.push_back(d.name + ".qds");
        save(d, join(dir, files.back()));
        total += d.size();
        std::printf("%-12s %5zu samples -> %s\n", d.name.c_str(), d.size(), join(dir, files.back()).c_str());
    }
    write_manifest(sets, files, a.seed, a.kind, join(dir, a.kind + "_manifest.txt"));
    std::printf("total %zu samples, manifest %s\n", total, join(dir, a.kind + "_manifest.txt").c_str());
}

struct ChernArgs {
    std::string in;
    int c = 0;
    double m = 0.0;
    int length = kDefaultLength;
};

int cmd_chern(const ChernArgs& a) {
    if (!a.in.empty()) {
        const Dataset d = load(a.in);
        int ill = 0, mismatched = 0;
        std::printf("index,label,chern,raw,residual,ill_conditioned\n");
        for (std::size_t i = 0; i < d.size(); ++i) {
            const SpinTexture& t = d.samples[i].texture;
            const ChernResult r = chern_sum(t.spins, t.length);
            const bool bad = r.residual > kResidualLimit;
            ill += bad;
            mismatched += !bad && r.chern != t.label;
            std::printf("%zu,%d,%d,%.12f,%.3e,%d\n", i, t.label, r.chern, r.raw, r.residual, bad ? 1 : 0);
        }
        std::fprintf(stderr, "%zu samples, %d ill-conditioned, %d label mismatches\n", d.size(), ill, mismatched);
        if (mismatched) return kData;
        return ill ? kNumerical : kOk;
    }
    if (a.c < 1) throw UsageError("chern needs --in or --c and --m");
    const SpinTexture t = texture(a.c, a.m, a.length);
    const HField h = chern_hfield(a.c, a.m, a.length);
    const ChernResult r = chern_sum(t.spins, t.length);
    std::printf("%d\nresidual=%.3e raw=%.15f min_gap=%.6f\n", r.chern, r.residual, r.raw, h.min_norm());
    if (r.residual > kResidualLimit) {
        std::fprintf(stderr, "ill-conditioned: residual %.3e above %.2f\n", r.residual, kResidualLimit);
        return kNumerical;
    }
    return kOk;
}

struct FmapArgs {
    int c = 1;
    double m = 1.0;
    double sd = 0.0;
    std::uint64_t seed = 42;
    int length = kDefaultLength;
    std::string out = "fmap";
};

void cmd_fmap(const FmapArgs& a) {
    const HField h = add_h_noise(chern_hfield(a.c, a.m, a.length), a.sd, a.seed);
    FMap f = f_map(h);
    f.c = a.c;
    f.m = a.m;
    f.noise_sd = a.sd;
    f.seed = a.seed;
    const fs::path parent = fs::path(a.out).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    write_fmap_csv(f, a.out + ".csv");
    write_fmap_pgm(f, a.out + ".pgm");
    std::printf("max|F|=%.6e residue=%.3e -> %s.csv, %s.pgm\n", f.max_abs(), f.max_residue, a.out.c_str(),
                a.out.c_str());
}

struct PcaArgs {
    double sd = 0.0;
    std::uint64_t seed = 42;
    int components = 2;
    int length = kDefaultLength;
    std::string out = "pca";
};

void cmd_pca(const PcaArgs& a) {
    ensure_dir(a.out);
    const fs::path dir(a.out);
    const std::vector<PcaSample> data = build_pca_dataset(a.sd, a.seed, a.length);
    const Eigen::MatrixXd x = stack_maps(data);
    const std::vector<int> labels = labels_of(data);
    const PcaModel model = fit(x);
    if (a.components < 1 || a.components > model.components()) throw UsageError("--components out of range");
    const Eigen::MatrixXd p = project_all(model, x, a.components);
    const ClusterReport r = cluster_report(p, labels);
    write_spectrum_csv(model, join(dir, "spectrum.csv"));
    write_projections_csv(project_all(model, x, std::min(6, model.components())), labels,
                          join(dir, "projections.csv"));
    write_confusion_csv(r, join(dir, "confusion.csv"));
    write_groups_csv(r, join(dir, "groups.csv"));
    std::printf("samples=%d components=%d correct=%d accuracy=%.4f rank=%d\n", r.total, a.components, r.correct,
                r.accuracy(), model.rank);
    std::printf("confused pairs:");
    for (const auto& [u, v] : r.confused_pairs()) std::printf(" {%+d,%+d}", u, v);
    std::printf("\ngroups:");
    for (const auto& g : r.groups) {
        std::printf(" {");
        for (std::size_t i = 0; i < g.size(); ++i) std::printf(i ? ",%+d" : "%+d", g[i]);
        std::printf("}");
    }
    std::printf("\n");
}

struct TrainArgs {
    std::string arch = "qcnn";
    std::string activation = "arctan";
    int epochs = -1;
    std::uint64_t seed = 42;
    double lr = -1.0;
    std::string schedule;
    int batch = -1;
    std::vector<int> widths;
    std::string data = "data";
    std::string out = "model";
};

int cmd_train(const TrainArgs& a) {
    nn::ModelConfig cfg;
    cfg.arch = a.arch;
    cfg.activation = nn::parse_activation(a.activation);
    cfg.seed = a.seed;
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.lr > 0) cfg.learning_rate = a.lr;
    if (!a.schedule.empty()) cfg.schedule = a.schedule;
    if (a.batch > 0) cfg.batch_size = a.batch;
    cfg.widths = a.widths;
    const fs::path dir(a.data);
    const Dataset train = load(join(dir, "train.qds"));
    const Dataset validation = load(join(dir, "validation.qds"));
    if (train.size() == 0) throw UsageError("training set is empty");
    cfg.length = train.length;
    nn::Network net(cfg);
    std::printf("arch=%s activation=%s parameters=%zu epochs=%d\n", cfg.arch.c_str(), a.activation.c_str(),
                net.param_count(), cfg.epochs);
    std::fflush(stdout);
    const auto curve = nn::train(net, train, validation, [](const nn::EpochRecord& e) {
        std::printf("epoch %d train_loss=%.5f train_acc=%.4f val_loss=%.5f val_acc=%.4f\n", e.epoch, e.train_loss,
                    e.train_acc, e.val_loss, e.val_acc);
        std::fflush(stdout);
    });
    ensure_dir(a.out);
    const fs::path out(a.out);
    save_checkpoint(net, join(out, "model.qnn"));
    nn::write_curve_csv(curve, join(out, "curve.csv"));
    std::printf("parameters=%zu\n", net.param_count());
    if (fs::exists(dir / "test.qds")) {
        const nn::EvalResult r = nn::evaluate(net, load(join(dir, "test.qds")));
        std::printf("test_accuracy=%.4f (%d/%d)\n", r.accuracy(), r.correct, r.total);
    }
    return kOk;
}

struct EvalArgs {
    std::string model;
    std::vector<std::string> data;
    bool by_category = false;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    nn::Network net = nn::load_checkpoint(a.model);
    std::vector<std::pair<std::string, nn::EvalResult>> results;
    for (const std::string& path : a.data) {
        const Dataset d = load(path);
        if (d.size() == 0) throw UsageError("dataset " + path + " is empty");
        results.emplace_back(d.name, nn::evaluate(net, d));
    }
    std::string csv = "dataset,class,count,correct,accuracy\n";
    char line[256];
    double sum = 0.0, sq = 0.0;
    for (const auto& [name, r] : results) {
        std::snprintf(line, sizeof line, "%s,all,%d,%d,%.6f\n", name.c_str(), r.total, r.correct, r.accuracy());
        csv += line;
        sum += r.accuracy();
        sq += r.accuracy() * r.accuracy();
        if (!a.by_category) continue;
        for (int k = 0; k < nn::kClasses; ++k) {
            int count = 0;
            for (int v : r.confusion[k]) count += v;
            if (!count) continue;
            std::snprintf(line, sizeof line, "%s,%d,%d,%d,%.6f\n", name.c_str(), class_chern(k), count,
                          r.confusion[k][k], static_cast<double>(r.confusion[k][k]) / count);
            csv += line;
        }
    }
    const double n = static_cast<double>(results.size());
    const double mean = sum / n;
    const double sd = results.size() > 1 ? std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1))) : 0.0;
    std::snprintf(line, sizeof line, "# mean_accuracy=%.6f sd_accuracy=%.6f datasets=%zu\n", mean, sd,
                  results.size());
    csv += line;
    std::fputs(csv.c_str(), stdout);
    if (!a.out.empty()) {
        std::ofstream out(a.out);
        out << csv;
        if (!out) throw Error("write failed for " + a.out);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    // Large tensors are reallocated every batch; keep them off mmap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Quaternion features for topological spin textures"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker cap (default QTOPO_THREADS, then 1)")->check(CLI::NonNegativeNumber);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate datasets");
    g->add_option("kind", gen.kind, "train, test, predict or pca")
        ->required()
        ->check(CLI::IsMember({"train", "test", "predict", "pca"}));
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out, "output directory");
    g->add_option("--sd", gen.sd, "h noise for pca maps")->check(CLI::NonNegativeNumber);
    g->add_option("--length", gen.length)->check(CLI::Range(2, 512));

    ChernArgs chern;
    auto* c = app.add_subcommand("chern", "Chern number of a model texture or every sample of a file");
    auto* c_in = c->add_option("--in", chern.in, "dataset file");
    c->add_option("--c", chern.c)->excludes(c_in)->check(CLI::PositiveNumber);
    c->add_option("--m", chern.m)->excludes(c_in);
    c->add_option("--length", chern.length)->check(CLI::Range(2, 512));

    FmapArgs fmap;
    auto* f = app.add_subcommand("fmap", "F map of the model as CSV and PGM");
    f->add_option("--c", fmap.c)->required()->check(CLI::PositiveNumber);
    f->add_option("--m", fmap.m)->required();
    f->add_option("--sd", fmap.sd)->check(CLI::NonNegativeNumber);
    f->add_option("--seed", fmap.seed);
    f->add_option("--length", fmap.length)->check(CLI::Range(2, 512));
    f->add_option("--out", fmap.out, "output prefix");

    PcaArgs pca;
    auto* p = app.add_subcommand("pca", "PCA of the 210-map corpus");
    p->add_option("--sd", pca.sd)->check(CLI::NonNegativeNumber);
    p->add_option("--seed", pca.seed);
    p->add_option("--components", pca.components);
    p->add_option("--length", pca.length)->check(CLI::Range(2, 512));
    p->add_option("--out", pca.out, "output directory");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a classifier");
    t->add_option("--arch", train.arch)->check(CLI::IsMember({"qcnn", "cnn"}));
    t->add_option("--activation", train.activation)->check(CLI::IsMember({"arctan", "tanh", "relu"}));
    t->add_option("--epochs", train.epochs)->check(CLI::NonNegativeNumber);
    t->add_option("--seed", train.seed);
    t->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
    t->add_option("--schedule", train.schedule, "learning rate schedule")->check(CLI::IsMember({"constant", "cosine"}));
    t->add_option("--batch", train.batch)->check(CLI::PositiveNumber);
    t->add_option("--widths", train.widths, "channel widths")->delimiter(',');
    t->add_option("--data", train.data, "directory with train.qds, validation.qds and optionally test.qds");
    t->add_option("--out", train.out, "output directory");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "accuracy of a checkpoint");
    e->add_option("--model", eval.model)->required();
    e->add_option("--data", eval.data, "dataset files")->required();
    e->add_flag("--by-category", eval.by_category, "add one row per true class");
    e->add_option("--out", eval.out, "report CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? kOk : kUsage;
    }
    if (threads > 0) set_thread_count(threads);

    try {
        if (*g) cmd_gen(gen);
        if (*c) return cmd_chern(chern);
        if (*f) cmd_fmap(fmap);
        if (*p) cmd_pca(pca);
        if (*t) return cmd_train(train);
        if (*e) return cmd_eval(eval);
        return kOk;
    } catch (const UsageError& err) {
        std::fprintf(stderr, "usage error: %s\n", err.what());
        return kUsage;
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "usage error: %s\n", err.what());
        return kUsage;
    } catch (const DomainError& err) {
        std::fprintf(stderr, "usage error: %s\n", err.what());
        return kUsage;
    } catch (const FormatError& err) {
        std::fprintf(stderr, "format error: %s\n", err.what());
        return kData;
    } catch (const ConsistencyError& err) {
        std::fprintf(stderr, "data error: %s\n", err.what());
        return kData;
    } catch (const GapClosedError& err) {
        std::fprintf(stderr, "gap closed: %s\n", err.what());
        return kNumerical;
    } catch (const IllConditionedError& err) {
        std::fprintf(stderr, "ill-conditioned: %s\n", err.what());
        return kNumerical;
    } catch (const NumericalError& err) {
        std::fprintf(stderr, "numerical failure: %s\n", err.what());
        return kNumerical;
    } catch (const Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kData;
    }
}
