#pragma once

#include "msan/core.hpp"
#include "msan/rng.hpp"

namespace msan {

enum class WeightScheme {
  kUniformQuarter,  // every group weighs 0.25
  kFourthPower,     // group level l weighs (l/4)^4
};

struct GeneratorConfig {
  int count = 100;
  uint64_t seed = 0;
  double mean_segments = 13.90;
  double mean_segment_duration_s = 2.77;
  double mean_labels_per_video = 30.18;
  int feature_dim = 32;
  int topic_count = 4;
  double ppl_low = 1.0;   // below: annotated coherent
  double ppl_high = 2.5;  // above: annotated incoherent
  double test_fraction = 0.2;
  int max_segments = 0;  // 0 = unlimited; small caps keep the oracle in reach
  WeightScheme weight_scheme = WeightScheme::kUniformQuarter;
};

struct Dataset {
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// Seeded synthetic generator calibrated to the reference corpus statistics.
// Per-instance rng streams make generation order-independent.
Dataset generate(const GeneratorConfig& cfg);
Instance generate_instance(const GeneratorConfig& cfg, int index, bool with_annotations);

// JSON instance files (schema_version 1, 0-based indices throughout).
Instance load_instance(const std::string& path);
void save_instance(const Instance& inst, const std::string& path);

// Dataset directory: instances/*.json plus manifest.json with split tags.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace msan
