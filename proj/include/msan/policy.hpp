#pragma once

#include <map>
#include <string>

#include "msan/autodiff.hpp"
#include "msan/core.hpp"
#include "msan/rng.hpp"

namespace msan {

enum class SampleMode { kSample, kGreedy };

struct PolicyConfig {
  int feature_dim = 32;
  int embed_dim = 32;    // full-scale 768
  int enc_hidden = 16;   // full-scale 256
  int enc_layers = 1;    // full-scale 2
  SampleMode sample_mode = SampleMode::kSample;
  bool feasibility_mask = false;  // off: duration control is the EOS rule alone
  bool use_glimpse = true;

  // decoder hidden must match the 2h encoder output for the bilinear query
  int dec_hidden() const { return 2 * enc_hidden; }
};

struct ParamBlock {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct PolicyParams {
  PolicyConfig config;
  std::vector<ParamBlock> blocks;

  static PolicyParams init(const PolicyConfig& cfg, Rng& rng);

  ParamBlock& block(const std::string& name);
  const ParamBlock& block(const std::string& name) const;
  size_t total_size() const;
};

// Checkpoint: text manifest (config + shape list) followed by flat
// little-endian doubles per block, in manifest order.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

enum class Termination { kEosDuration, kExhausted };

struct Rollout {
  Selection selection;
  std::vector<double> step_logprobs;  // one per free (non-forced) choice
  ad::Tensor logprob_sum;             // on the owning tape; scalar
  Termination terminated_by = Termination::kExhausted;
};

// Binds one parameter set to one tape: creates leaf tensors for every block
// so gradients can be read back per block after backward().
class PolicyNet {
 public:
  PolicyNet(ad::Tape& tape, const PolicyParams& params);

  // Encoder: H (2h x M) plus the projected initial decoder state.
  struct Encoded {
    ad::Tensor H;
    ad::Tensor dec_init;
    std::vector<ad::Tensor> embedded;  // x_i per segment
  };
  Encoded encode(const Instance& inst);

  // One decoder step: bilinear glimpse attention, query update, second
  // masked attention. blocked[i] != 0 hides position i.
  ad::Tensor decode_step(const Encoded& enc, ad::Tensor dec_state,
                         const std::vector<uint8_t>& blocked);

  // Full episode: forced end segment first (when the instance asks for it),
  // then sample/argmax until the duration EOS rule fires.
  Rollout rollout(const Instance& inst, const DurationWindow& window, SampleMode mode, Rng& rng);

  ad::Tensor var(const std::string& name) const { return vars_.at(name); }
  const std::map<std::string, ad::Tensor>& vars() const { return vars_; }
  const PolicyConfig& config() const { return config_; }

  ad::Tensor gru_cell(const std::string& prefix, ad::Tensor x, ad::Tensor h);

 private:
  ad::Tape& tape_;
  PolicyConfig config_;
  std::map<std::string, ad::Tensor> vars_;
};

}  // namespace msan
