#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gifguard/data_pipeline.hpp"
#include "gifguard/error.hpp"
#include "gifguard/gif_codec.hpp"
#include "gifguard/message.hpp"
#include "gifguard/metrics.hpp"
#include "gifguard/rds.hpp"
#include "gifguard/rng.hpp"
#include "gifguard/training.hpp"

namespace fs = std::filesystem;
using namespace gifguard;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("GIFGUARD_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::logic_error&) {
      throw Error("GIFGUARD_SEED is not an unsigned integer");
    }
  }
  return 0;
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

codec::IndexedGif read_gif(const fs::path& path) { return codec::gif_read(path); }

torch::Tensor load_clip(const codec::IndexedGif& gif, const train::TrainConfig& cfg) {
  if (gif.frames != cfg.frames || gif.height != cfg.height || gif.width != cfg.width) {
    throw Error("reprofile required: checkpoint expects (T,H,W)=(" + std::to_string(cfg.frames) + "," +
                std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "), got (" +
                std::to_string(gif.frames) + "," + std::to_string(gif.height) + "," + std::to_string(gif.width) + ")");
  }
  return data::normalize(codec::to_frames(gif));
}

void write_tensor_gif(const torch::Tensor& g, const fs::path& path, int delay_ms,
                      const codec::IndexedGif* original = nullptr) {
  const auto frames = data::denormalize(g);
  if (original && codec::to_frames(*original) == frames) {
    codec::gif_write(*original, path);
    return;
  }
  codec::gif_write(codec::quantize_clip(frames, 256, delay_ms), path);
}

std::vector<rds::DistortionSpec> parse_attack_list(const std::string& list, std::uint64_t seed) {
  if (list.empty() || list == "all") return train::default_attacks(seed);
  std::vector<rds::DistortionSpec> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item.find('=') != std::string::npos) {
      out.push_back(rds::DistortionSpec::parse(item));
    } else {
      const auto kind = rds::parse_kind(item);
      out.push_back(rds::default_spec(kind, derive_seed(seed, {static_cast<std::uint64_t>(kind)})));
    }
  }
  return out;
}

int cmd_build_dataset(std::int64_t n_train, std::int64_t n_val, std::int64_t n_test, const fs::path& out,
                      std::optional<std::uint64_t> seed, std::int64_t height, std::int64_t width,
                      std::int64_t frames, bool overwrite) {
  data::DatasetOptions opts;
  opts.shape = {frames, height, width};
  opts.seed = resolve_seed(seed);
  opts.overwrite = overwrite;
  const auto manifest = data::build_dataset(n_train, n_val, n_test, out, opts);
  std::cout << "train " << manifest.split(data::Split::train).size() << "\n"
            << "val " << manifest.split(data::Split::val).size() << "\n"
            << "test " << manifest.split(data::Split::test).size() << "\n"
            << "manifest " << (out / data::kManifestName).string() << "\n"
            << "digest " << hex64(file_digest(out / data::kManifestName)) << "\n";
  return 0;
}

int cmd_train(const fs::path& config, const fs::path& out, const std::optional<fs::path>& resume,
              const std::string& manifest_override, int log_every, bool plot) {
  auto cfg = train::TrainConfig::load(config);
  if (!manifest_override.empty()) cfg.manifest = manifest_override;
  if (cfg.manifest.empty()) throw Error("no dataset manifest: set 'manifest' in the config or pass --manifest");
  const auto manifest = data::read_manifest(cfg.manifest);
  train::TrainOptions opts;
  opts.out_dir = out;
  opts.resume = resume;
  opts.plot = plot;
  opts.on_step = [&](const train::StepRecord& r) {
    if (log_every > 0 && (r.step + 1) % log_every == 0) {
      std::printf("epoch %lld step %lld stage %d %-9s l_imp %.5f l_msg %.4f ber %.4f psnr %.2f\n",
                  static_cast<long long>(r.epoch), static_cast<long long>(r.step + 1), r.stage, r.kind.c_str(),
                  r.l_imp, r.l_msg, r.ber, r.psnr);
      std::fflush(stdout);
    }
  };
  const auto result = train::train(cfg, manifest, opts);
  std::cout << "checkpoint " << result.final_checkpoint.string() << "\n"
            << "log " << result.log_path.string() << "\n";
  return 0;
}

int cmd_embed(const fs::path& ckpt_path, const fs::path& in, const std::string& message, const fs::path& out,
              std::optional<std::uint64_t> seed) {
  auto ck = train::load_checkpoint(ckpt_path);
  const auto gif = read_gif(in);
  const auto cover = load_clip(gif, ck.cfg);
  MessageVector m;
  if (message == "random") {
    std::mt19937_64 rng(derive_seed(resolve_seed(seed), {0xE3BED}));
    m = MessageVector::random(static_cast<std::size_t>(ck.cfg.payload_len), rng);
  } else {
    m = MessageVector::from_hex(message, static_cast<std::size_t>(ck.cfg.payload_len));
  }
  const auto wm = train::embed(ck.models, cover, m.to_tensor());
  write_tensor_gif(wm, out, gif.frame_delay_ms);
  std::cout << "message " << m.to_hex() << "\n";
  return 0;
}

int cmd_extract(const fs::path& ckpt_path, const fs::path& in) {
  auto ck = train::load_checkpoint(ckpt_path);
  const auto clip = load_clip(read_gif(in), ck.cfg);
  const auto logits = train::extract_logits(ck.models, clip);
  const auto bits = MessageVector::from_tensor(dird::logits_to_bits(logits));
  const auto prob = torch::sigmoid(logits.to(torch::kFloat64));
  std::string bit_string;
  for (auto b : bits.bits) bit_string += static_cast<char>('0' + b);
  std::cout << "bits " << bit_string << "\n";
  if (bits.size() % 4 == 0) std::cout << "hex " << bits.to_hex() << "\n";
  std::cout << "confidence";
  for (std::int64_t i = 0; i < prob.size(0); ++i) {
    const double p = prob[i].item<double>();
    std::printf(" %.4f", bits.bits[static_cast<std::size_t>(i)] ? p : 1.0 - p);
  }
  std::cout << "\n";
  return 0;
}

int cmd_attack(const fs::path& in, const std::string& kind, const std::vector<std::string>& params,
               std::optional<double> quality, std::optional<std::uint64_t> seed, const fs::path& out,
               const std::string& ckpt_path) {
  auto spec = rds::default_spec(rds::parse_kind(kind), resolve_seed(seed));
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw Error("--param expects key=value, got '" + p + "'");
    const auto key = p.substr(0, eq);
    if (!spec.params.contains(key)) throw Error("attack " + rds::kind_label(spec.kind) + " has no parameter '" + key + "'");
    spec.params[key] = std::stod(p.substr(eq + 1));
  }
  if (quality) {
    if (spec.kind != rds::DistortionKind::diff_jpeg) throw Error("--quality applies to the jpeg attack only");
    spec.params["quality"] = *quality;
  }
  const auto gif = read_gif(in);
  const auto clip = data::normalize(codec::to_frames(gif));
  rds::DistortionContext ctx;
  std::optional<train::Checkpoint> ck;
  if (!ckpt_path.empty()) {
    ck.emplace(train::load_checkpoint(ckpt_path));
    ctx.surrogate = &ck->models.surrogate;
  }
  torch::NoGradGuard guard;
  const auto result = rds::apply_distortion(clip, spec, ctx);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  write_tensor_gif(result.tensor, out, gif.frame_delay_ms, &gif);
  std::cout << "spec " << spec.serialize() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& ckpt_path, const std::string& split, const std::string& attacks,
                 const fs::path& out, const std::string& manifest_override, std::int64_t max_samples,
                 std::optional<std::uint64_t> seed, bool gif_path, const std::string& method) {
  auto ck = train::load_checkpoint(ckpt_path);
  const auto manifest_path = manifest_override.empty() ? ck.cfg.manifest : manifest_override;
  if (manifest_path.empty()) throw Error("no dataset manifest: pass --manifest");
  const auto manifest = data::read_manifest(manifest_path);
  train::EvalOptions opts;
  opts.seed = resolve_seed(seed);
  opts.attacks = parse_attack_list(attacks, opts.seed);
  opts.max_samples = max_samples;
  opts.gif_path = gif_path;
  opts.method = method;
  const auto report = train::evaluate(ck.models, ck.cfg, manifest, data::parse_split(split), opts);
  metrics::make_report(report, out);
  metrics::write_ber_svg(report, out / "robustness.svg");
  std::cout << metrics::report_markdown(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GIF watermark embedding, extraction, attack simulation and training"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;

  auto* build = app.add_subcommand("build-dataset", "generate a synthetic face-GIF dataset");
  std::int64_t n_train = 8, n_val = 4, n_test = 4, height = 64, width = 64, frames = 10;
  fs::path data_out;
  bool overwrite = false;
  build->add_option("--n-train", n_train)->check(CLI::NonNegativeNumber);
  build->add_option("--n-val", n_val)->check(CLI::NonNegativeNumber);
  build->add_option("--n-test", n_test)->check(CLI::NonNegativeNumber);
  build->add_option("--out", data_out)->required();
  build->add_option("--seed", seed);
  build->add_option("--height", height)->check(CLI::PositiveNumber);
  build->add_option("--width", width)->check(CLI::PositiveNumber);
  build->add_option("--frames", frames)->check(CLI::PositiveNumber);
  build->add_flag("--overwrite", overwrite);

  auto* trn = app.add_subcommand("train", "train encoder and decoder");
  fs::path config, train_out;
  std::optional<fs::path> resume;
  std::string manifest;
  int log_every = 50;
  bool no_plot = false;
  trn->add_option("--config", config)->required()->check(CLI::ExistingFile);
  trn->add_option("--out", train_out)->required();
  trn->add_option("--resume", resume)->check(CLI::ExistingFile);
  trn->add_option("--manifest", manifest);
  trn->add_option("--log-every", log_every);
  trn->add_flag("--no-plot", no_plot);

  auto* emb = app.add_subcommand("embed", "embed a message into a GIF");
  fs::path ckpt, in, out;
  std::string message;
  emb->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  emb->add_option("--in", in)->required()->check(CLI::ExistingFile);
  emb->add_option("--message", message)->required();
  emb->add_option("--out", out)->required();
  emb->add_option("--seed", seed);

  auto* ext = app.add_subcommand("extract", "recover the message from a GIF");
  ext->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  ext->add_option("--in", in)->required()->check(CLI::ExistingFile);

  auto* atk = app.add_subcommand("attack", "apply one distortion to a GIF");
  std::string kind, attack_ckpt;
  std::vector<std::string> params;
  std::optional<double> quality;
  atk->add_option("--in", in)->required()->check(CLI::ExistingFile);
  atk->add_option("--kind", kind)->required();
  atk->add_option("--param", params, "attack parameter key=value (repeatable)");
  atk->add_option("--quality", quality, "JPEG quality");
  atk->add_option("--seed", seed);
  atk->add_option("--out", out)->required();
  atk->add_option("--ckpt", attack_ckpt, "checkpoint holding the fitted surrogate");

  auto* evl = app.add_subcommand("evaluate", "robustness and quality report for a checkpoint");
  std::string split = "test", attacks = "all", method = "GIFGuard";
  std::int64_t max_samples = 0;
  bool no_gif = false;
  evl->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  evl->add_option("--split", split);
  evl->add_option("--attacks", attacks, "comma-separated attack labels, serialized specs, or 'all'");
  evl->add_option("--out", out)->required();
  evl->add_option("--manifest", manifest);
  evl->add_option("--max-samples", max_samples);
  evl->add_option("--seed", seed);
  evl->add_option("--method", method);
  evl->add_flag("--no-gif-path", no_gif);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*build) return cmd_build_dataset(n_train, n_val, n_test, data_out, seed, height, width, frames, overwrite);
    if (*trn) return cmd_train(config, train_out, resume, manifest, log_every, !no_plot);
    if (*emb) return cmd_embed(ckpt, in, message, out, seed);
    if (*ext) return cmd_extract(ckpt, in);
    if (*atk) return cmd_attack(in, kind, params, quality, seed, out, attack_ckpt);
    if (*evl) return cmd_evaluate(ckpt, split, attacks, out, manifest, max_samples, seed, !no_gif, method);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (const auto nl = msg.find('\n'); nl != std::string::npos) msg.erase(nl);
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 1;
}
