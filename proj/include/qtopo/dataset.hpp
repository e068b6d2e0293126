#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qtopo/spin_models.hpp"

namespace qtopo {

inline constexpr int kClassCount = 9;

// One-hot index for C = -4 .. +4.
int class_index(int chern);
int class_chern(int index);

struct LabeledSample {
    SpinTexture texture;  // spins are f32-representable; label is the oracle's
    bool near_transition = false;  // |m| within 0.05 of 0 or 2
    bool ill_conditioned = false;  // oracle residual above 0.05
};

struct Dataset {
    std::string name;
    int length = kDefaultLength;
    std::vector<LabeledSample> samples;

    std::size_t size() const { return samples.size(); }
    std::array<int, kClassCount> class_counts() const;
};

struct CorpusRecipe {
    int per_interval = 640;  // m in [-1.9, -0.1] and again in [0.1, 1.9], per c
    int per_trivial = 80;    // m = -3 and again m = 3, per c
    int per_vortex = 30;     // per (c, plane)
};

inline constexpr CorpusRecipe kTrainingRecipe{640, 80, 30};
inline constexpr CorpusRecipe kTestingRecipe{128, 16, 6};

struct TrainingSplit {
    Dataset train;
    Dataset validation;
};

// Chern-model samples go through translation, rotation and 30-site noise;
// vortices through translation and rotation only.
Dataset build_corpus(const CorpusRecipe& recipe, std::uint64_t seed, std::uint64_t stream,
                     const std::string& name, int length = kDefaultLength);
// Stratified: each class contributes round(n / 4) samples to validation.
TrainingSplit split_validation(const Dataset& all, std::uint64_t seed, double fraction = 0.25);

TrainingSplit build_training(std::uint64_t seed, int length = kDefaultLength);
Dataset build_testing(std::uint64_t seed, int length = kDefaultLength);

inline constexpr int kPredictionPerCategory = 120;
// Categories chern, flip_z, swap_yz, helical, conical, fm. Translation and
// rotation only.
std::vector<Dataset> build_prediction(std::uint64_t seed, int length = kDefaultLength);

// Rounds every spin component to f32, as stored on disk.
void quantize(SpinTexture& t);

std::vector<std::uint8_t> serialize(const Dataset& d);
Dataset deserialize(const std::vector<std::uint8_t>& bytes, const std::string& name = "");
void save(const Dataset& d, const std::string& path);
Dataset load(const std::string& path);

// Plain-text key=value summary of a set of dataset files.
void write_manifest(const std::vector<Dataset>& sets, const std::vector<std::string>& files,
                    std::uint64_t seed, const std::string& kind, const std::string& path);

}  // namespace qtopo
