#pragma once

// Joint encoder/decoder/discriminator training under the distortion
// curriculum, checkpoints, the per-step log and checkpoint evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gifguard/data_pipeline.hpp"
#include "gifguard/dird_decoder.hpp"
#include "gifguard/metrics.hpp"
#include "gifguard/objectives.hpp"
#include "gifguard/rds.hpp"
#include "gifguard/stare_encoder.hpp"

namespace gifguard::train {

struct TrainConfig {
  std::int64_t total_epochs = 20;
  std::int64_t steps_per_epoch = 100;
  std::int64_t batch_size = 4;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::int64_t payload_len = 32;
  std::int64_t frames = 10;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  bool use_se = true;
  dird::HeadMode head_mode = dird::HeadMode::adaptive_flat;
  rds::CurriculumSchedule curriculum;
  obj::LossWeights loss_weights;
  int surrogate_steps = 300;
  double surrogate_lr = 2e-3;
  std::string manifest;  // dataset manifest; relative paths resolve against the config file
  int threads = 0;       // 0 leaves the torch default

  /// Flat "key = value" text; '#' starts a comment. Unknown keys are errors.
  static TrainConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static TrainConfig load(const std::filesystem::path& path);
  /// Canonical text form (every key, fixed order); parse(serialize()) == *this.
  std::string serialize() const;
  void validate() const;

  stare::EncoderConfig encoder_config() const;
  dird::DecoderConfig decoder_config() const;
  std::int64_t total_steps() const { return total_epochs * steps_per_epoch; }
};

/// Stage of a 1-based epoch under the config's curriculum.
rds::StageDescriptor stage_for_epoch(std::int64_t epoch, const TrainConfig& cfg);

struct StepRecord {
  std::int64_t epoch = 0;  // 1-based
  std::int64_t step = 0;   // global, 0-based
  int stage = 1;
  std::string kind;        // distortion label
  double l_imp = 0, l_adv = 0, l_msg = 0, lambda_msg = 0, ber = 0, psnr = 0;

  bool operator==(const StepRecord&) const = default;
};

class TrainLog {
 public:
  static constexpr const char* kHeader = "epoch\tstep\tstage\tkind\tl_imp\tl_adv\tl_msg\tlambda_msg\tber\tpsnr";

  static std::string format(const StepRecord& r);
  static StepRecord parse_line(const std::string& line);
  static std::vector<StepRecord> read(const std::filesystem::path& path);

  /// Opens `path` for appending; records at or after `first_step` already in
  /// the file are dropped first so a resumed run continues without gaps.
  TrainLog(const std::filesystem::path& path, std::int64_t first_step);
  void append(const StepRecord& r);

 private:
  std::filesystem::path path_;
};

/// Every network of a run.
struct Models {
  stare::StareEncoder encoder{nullptr};
  dird::DirdDecoder decoder{nullptr};
  obj::Discriminator discriminator{nullptr};
  rds::SemanticSurrogate surrogate;

  /// Fresh, seeded initialisation for `cfg`.
  static Models create(const TrainConfig& cfg);
};

struct CheckpointMeta {
  int format_version = 1;
  std::int64_t global_step = 0;  // optimizer steps completed
  std::int64_t inferred_flat_dim = 0;
  std::string head_mode;
  std::string label;             // "stage1", "final", ...
};

struct Checkpoint {
  TrainConfig cfg;
  CheckpointMeta meta;
  Models models;
};

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const CheckpointMeta& meta,
                     Models& models, torch::optim::Adam* opt_gen, torch::optim::Adam* opt_disc);
/// Restores models without re-profiling the decoder. Throws if the stored
/// head mode or flat dimension disagree with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::function<void(const StepRecord&)> on_step;
  bool plot = true;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::vector<StepRecord> records;  // steps run by this call
  double surrogate_mse = 0;
};

inline constexpr const char* kLogName = "train_log.tsv";
inline constexpr const char* kFinalCheckpoint = "final.ckpt";

/// Fails with a non-finite-loss error naming the offending record.
TrainResult train(const TrainConfig& cfg, const data::Manifest& manifest, const TrainOptions& options);

/// PSNR and BER against step as a two-panel SVG.
void write_convergence_svg(const std::vector<StepRecord>& records, const std::filesystem::path& path);

struct EvalOptions {
  std::vector<rds::DistortionSpec> attacks;
  std::string method = "GIFGuard";
  std::int64_t max_samples = 0;  // 0 = whole split
  std::uint64_t seed = 0;        // message seed
  bool gif_path = true;          // also evaluate through a real GIF file round trip
};

/// Attacks used when none are requested: every kind at default strength.
std::vector<rds::DistortionSpec> default_attacks(std::uint64_t seed = 0);

/// Sample i is attacked with the listed spec re-seeded by
/// derive_seed(spec.seed, {i}); messages come from derive_seed(seed, {i}).
metrics::EvalReport evaluate(Models& models, const TrainConfig& cfg, const data::Manifest& manifest,
                             data::Split split, const EvalOptions& options);

/// Convenience: tensor in [-1,1] (3,T,H,W) plus message -> watermarked tensor.
torch::Tensor embed(Models& models, const torch::Tensor& cover, const torch::Tensor& bits);
/// Logits (L,) for one clip.
torch::Tensor extract_logits(Models& models, const torch::Tensor& clip);

}  // namespace gifguard::train
