#include "gifguard/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gifguard/error.hpp"
#include "gifguard/gif_codec.hpp"
#include "gifguard/message.hpp"
#include "gifguard/rng.hpp"

namespace gifguard::train {

namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t { kInit = 1, kSurrogate, kEpochPerm, kStep };

std::string num(double v) {
  char buf[32];
  return {buf, std::to_chars(buf, buf + sizeof buf, v).ptr};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError("config", key + ": expected a boolean, got '" + v + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(v, &used));
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &used));
    } else {
      out = static_cast<T>(std::stoll(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::logic_error&) {
    throw ParseError("config", key + ": invalid number '" + v + "'");
  }
}

std::vector<std::int64_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::int64_t n) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {kEpochPerm, static_cast<std::uint64_t>(epoch)}));
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

const obj::RandomConvPerceptual& perceptual() {
  static const obj::RandomConvPerceptual phi;
  return phi;
}

}  // namespace

TrainConfig TrainConfig::parse(const std::string& text, const fs::path& base_dir) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config", "line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto v = trim(line.substr(eq + 1));
    if (key == "total_epochs") c.total_epochs = parse_number<std::int64_t>(key, v);
    else if (key == "steps_per_epoch") c.steps_per_epoch = parse_number<std::int64_t>(key, v);
    else if (key == "batch_size") c.batch_size = parse_number<std::int64_t>(key, v);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, v);
    else if (key == "adam_beta1") c.adam_beta1 = parse_number<double>(key, v);
    else if (key == "adam_beta2") c.adam_beta2 = parse_number<double>(key, v);
    else if (key == "payload_len") c.payload_len = parse_number<std::int64_t>(key, v);
    else if (key == "frames") c.frames = parse_number<std::int64_t>(key, v);
    else if (key == "height") c.height = parse_number<std::int64_t>(key, v);
    else if (key == "width") c.width = parse_number<std::int64_t>(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "alpha") c.alpha = parse_number<double>(key, v);
    else if (key == "use_se") c.use_se = parse_bool(key, v);
    else if (key == "head_mode") c.head_mode = dird::parse_head_mode(v);
    else if (key == "stage_end_1") c.curriculum.stage_ends[0] = parse_number<double>(key, v);
    else if (key == "stage_end_2") c.curriculum.stage_ends[1] = parse_number<double>(key, v);
    else if (key == "stage_end_3") c.curriculum.stage_ends[2] = parse_number<double>(key, v);
    else if (key == "hard_p_3") c.curriculum.hard_probability[2] = parse_number<double>(key, v);
    else if (key == "hard_p_4") c.curriculum.hard_probability[3] = parse_number<double>(key, v);
    else if (key == "lambda_adv") c.loss_weights.lambda_adv = parse_number<double>(key, v);
    else if (key == "lambda_msg_start") c.loss_weights.lambda_msg_start = parse_number<double>(key, v);
    else if (key == "lambda_msg_end") c.loss_weights.lambda_msg_end = parse_number<double>(key, v);
    else if (key == "beta") c.loss_weights.beta = parse_number<double>(key, v);
    else if (key == "surrogate_steps") c.surrogate_steps = parse_number<int>(key, v);
    else if (key == "surrogate_lr") c.surrogate_lr = parse_number<double>(key, v);
    else if (key == "threads") c.threads = parse_number<int>(key, v);
    else if (key == "manifest") {
      fs::path p(v);
      c.manifest = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).lexically_normal().string();
    } else {
      throw ParseError("config", "unknown key '" + key + "'");
    }
  }
  c.curriculum.total_epochs = c.total_epochs;
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string TrainConfig::serialize() const {
  std::ostringstream o;
  o << "total_epochs = " << total_epochs << "\n"
    << "steps_per_epoch = " << steps_per_epoch << "\n"
    << "batch_size = " << batch_size << "\n"
    << "learning_rate = " << num(learning_rate) << "\n"
    << "adam_beta1 = " << num(adam_beta1) << "\n"
    << "adam_beta2 = " << num(adam_beta2) << "\n"
    << "payload_len = " << payload_len << "\n"
    << "frames = " << frames << "\n"
    << "height = " << height << "\n"
    << "width = " << width << "\n"
    << "seed = " << seed << "\n"
    << "alpha = " << num(alpha) << "\n"
    << "use_se = " << (use_se ? "true" : "false") << "\n"
    << "head_mode = " << dird::head_mode_name(head_mode) << "\n"
    << "stage_end_1 = " << num(curriculum.stage_ends[0]) << "\n"
    << "stage_end_2 = " << num(curriculum.stage_ends[1]) << "\n"
    << "stage_end_3 = " << num(curriculum.stage_ends[2]) << "\n"
    << "hard_p_3 = " << num(curriculum.hard_probability[2]) << "\n"
    << "hard_p_4 = " << num(curriculum.hard_probability[3]) << "\n"
    << "lambda_adv = " << num(loss_weights.lambda_adv) << "\n"
    << "lambda_msg_start = " << num(loss_weights.lambda_msg_start) << "\n"
    << "lambda_msg_end = " << num(loss_weights.lambda_msg_end) << "\n"
    << "beta = " << num(loss_weights.beta) << "\n"
    << "surrogate_steps = " << surrogate_steps << "\n"
    << "surrogate_lr = " << num(surrogate_lr) << "\n"
    << "threads = " << threads << "\n";
  if (!manifest.empty()) o << "manifest = " << manifest << "\n";
  return o.str();
}

void TrainConfig::validate() const {
  if (total_epochs < 1 || steps_per_epoch < 1 || batch_size < 1) throw Error("epoch, step and batch counts must be positive");
  if (!(learning_rate > 0)) throw Error("learning_rate must be positive");
  if (surrogate_steps < 0) throw Error("surrogate_steps must be non-negative");
  if (curriculum.total_epochs != total_epochs) throw Error("curriculum length differs from total_epochs");
  curriculum.validate();
  loss_weights.validate();
  encoder_config().validate();
  auto d = decoder_config();
  d.validate();
}

stare::EncoderConfig TrainConfig::encoder_config() const {
  stare::EncoderConfig e;
  e.payload_len = payload_len;
  e.frames = frames;
  e.height = height;
  e.width = width;
  e.alpha = alpha;
  e.use_se = use_se;
  return e;
}

dird::DecoderConfig TrainConfig::decoder_config() const {
  dird::DecoderConfig d;
  d.payload_len = payload_len;
  d.frames = frames;
  d.height = height;
  d.width = width;
  d.head_mode = head_mode;
  d.use_se = use_se;
  return d;
}

rds::StageDescriptor stage_for_epoch(std::int64_t epoch, const TrainConfig& cfg) {
  return rds::stage_for_epoch(cfg.curriculum, epoch);
}

std::string TrainLog::format(const StepRecord& r) {
  return std::to_string(r.epoch) + "\t" + std::to_string(r.step) + "\t" + std::to_string(r.stage) + "\t" + r.kind +
         "\t" + num(r.l_imp) + "\t" + num(r.l_adv) + "\t" + num(r.l_msg) + "\t" + num(r.lambda_msg) + "\t" +
         num(r.ber) + "\t" + num(r.psnr);
}

StepRecord TrainLog::parse_line(const std::string& line) {
  std::vector<std::string> f;
  std::istringstream in(line);
  std::string cell;
  while (std::getline(in, cell, '\t')) f.push_back(cell);
  if (f.size() != 10) throw ParseError("train log", "expected 10 fields");
  StepRecord r;
  r.epoch = std::stoll(f[0]);
  r.step = std::stoll(f[1]);
  r.stage = std::stoi(f[2]);
  r.kind = f[3];
  r.l_imp = std::stod(f[4]);
  r.l_adv = std::stod(f[5]);
  r.l_msg = std::stod(f[6]);
  r.lambda_msg = std::stod(f[7]);
  r.ber = std::stod(f[8]);
  r.psnr = std::stod(f[9]);
  return r;
}

std::vector<StepRecord> TrainLog::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<StepRecord> out;
  std::string line;
  std::getline(in, line);
  if (line != kHeader) throw ParseError("train log", "bad header");
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_line(line));
  return out;
}

TrainLog::TrainLog(const fs::path& path, std::int64_t first_step) : path_(path) {
  std::vector<StepRecord> keep;
  if (fs::exists(path)) {
    for (auto& r : read(path))
      if (r.step < first_step) keep.push_back(r);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << kHeader << "\n";
  for (const auto& r : keep) out << format(r) << "\n";
}

void TrainLog::append(const StepRecord& r) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << format(r) << "\n";
}

Models Models::create(const TrainConfig& cfg) {
  torch::manual_seed(derive_seed(cfg.seed, {kInit}));
  Models m;
  m.encoder = stare::StareEncoder(cfg.encoder_config());
  m.decoder = dird::DirdDecoder(cfg.decoder_config());
  m.discriminator = obj::Discriminator();
  m.surrogate = rds::SemanticSurrogate();
  return m;
}

void save_checkpoint(const fs::path& path, const TrainConfig& cfg, const CheckpointMeta& meta, Models& models,
                     torch::optim::Adam* opt_gen, torch::optim::Adam* opt_disc) {
  nlohmann::ordered_json j;
  j["format_version"] = meta.format_version;
  j["global_step"] = meta.global_step;
  j["inferred_flat_dim"] = models.decoder->config().inferred_flat_dim;
  j["head_mode"] = dird::head_mode_name(models.decoder->config().head_mode);
  j["label"] = meta.label;
  j["surrogate_fitted"] = models.surrogate.fitted();
  j["config"] = cfg.serialize();

  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(j.dump()));
  auto sub = [&](const char* key, auto&& saver) {
    torch::serialize::OutputArchive a;
    saver(a);
    archive.write(key, a);
  };
  sub("encoder", [&](auto& a) { models.encoder->save(a); });
  sub("decoder", [&](auto& a) { models.decoder->save(a); });
  sub("discriminator", [&](auto& a) { models.discriminator->save(a); });
  sub("surrogate", [&](auto& a) { models.surrogate.net()->save(a); });
  if (opt_gen) sub("opt_gen", [&](auto& a) { opt_gen->save(a); });
  if (opt_disc) sub("opt_disc", [&](auto& a) { opt_disc->save(a); });
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  archive.save_to(tmp);
  fs::rename(tmp, path);
}

namespace {

struct RawCheckpoint {
  torch::serialize::InputArchive archive;
  nlohmann::json meta;
};

RawCheckpoint open_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path.string());
  RawCheckpoint raw;
  try {
    raw.archive.load_from(path.string());
    c10::IValue v;
    raw.archive.read("meta", v);
    raw.meta = nlohmann::json::parse(v.toStringRef());
  } catch (const c10::Error& e) {
    throw Error("cannot read checkpoint " + path.string());
  } catch (const nlohmann::json::exception&) {
    throw ParseError("checkpoint", "bad metadata");
  }
  if (raw.meta.value("format_version", 0) != 1) throw ParseError("checkpoint", "unsupported format version");
  return raw;
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& path) {
  auto raw = open_checkpoint(path);
  Checkpoint ck;
  ck.cfg = TrainConfig::parse(raw.meta.at("config").get<std::string>());
  ck.meta.format_version = raw.meta.at("format_version");
  ck.meta.global_step = raw.meta.at("global_step");
  ck.meta.inferred_flat_dim = raw.meta.at("inferred_flat_dim");
  ck.meta.head_mode = raw.meta.at("head_mode");
  ck.meta.label = raw.meta.value("label", "");
  if (ck.meta.head_mode != dird::head_mode_name(ck.cfg.head_mode)) {
    throw ParseError("checkpoint", "head mode disagrees with stored config");
  }

  auto dcfg = ck.cfg.decoder_config();
  dcfg.inferred_flat_dim = ck.meta.inferred_flat_dim;
  ck.models.encoder = stare::StareEncoder(ck.cfg.encoder_config());
  ck.models.decoder = dird::DirdDecoder(dcfg);
  ck.models.discriminator = obj::Discriminator();
  ck.models.surrogate = rds::SemanticSurrogate();
  auto load = [&](const char* key, auto&& loader) {
    torch::serialize::InputArchive a;
    raw.archive.read(key, a);
    loader(a);
  };
  try {
    load("encoder", [&](auto& a) { ck.models.encoder->load(a); });
    load("decoder", [&](auto& a) { ck.models.decoder->load(a); });
    load("discriminator", [&](auto& a) { ck.models.discriminator->load(a); });
    load("surrogate", [&](auto& a) { ck.models.surrogate.net()->load(a); });
  } catch (const c10::Error&) {
    throw ParseError("checkpoint", "parameter shapes do not match the stored config");
  }
  if (raw.meta.value("surrogate_fitted", false)) ck.models.surrogate.mark_fitted();
  return ck;
}

TrainResult train(const TrainConfig& cfg, const data::Manifest& manifest, const TrainOptions& options) {
  cfg.validate();
  if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
  if (manifest.shape != data::ClipShape{cfg.frames, cfg.height, cfg.width}) {
    throw Error("dataset clip shape does not match the training config");
  }
  const auto train_clips = data::load_split_tensor(manifest, data::Split::train);
  const auto n_train = train_clips.size(0);
  if (n_train == 0) throw Error("training split is empty");

  fs::create_directories(options.out_dir);
  TrainResult result;
  result.log_path = options.out_dir / kLogName;

  Models models;
  std::optional<RawCheckpoint> raw;
  std::int64_t start_step = 0;
  if (options.resume) {
    raw.emplace(open_checkpoint(*options.resume));
    const auto stored = TrainConfig::parse(raw->meta.at("config").get<std::string>());
    auto a = stored, b = cfg;
    a.manifest.clear();
    b.manifest.clear();
    if (a.serialize() != b.serialize()) throw Error("resume checkpoint was written with a different config");
    auto ck = load_checkpoint(*options.resume);
    models = std::move(ck.models);
    start_step = ck.meta.global_step;
  } else {
    models = Models::create(cfg);
    rds::SurrogateFitOptions fit;
    fit.steps = cfg.surrogate_steps;
    fit.learning_rate = cfg.surrogate_lr;
    fit.seed = derive_seed(cfg.seed, {kSurrogate});
    result.surrogate_mse = models.surrogate.fit(train_clips, fit);
  }

  std::vector<torch::Tensor> gen_params = models.encoder->parameters();
  for (auto& p : models.decoder->parameters()) gen_params.push_back(p);
  const auto adam = torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.adam_beta1, cfg.adam_beta2});
  torch::optim::Adam opt_gen(gen_params, adam);
  torch::optim::Adam opt_disc(models.discriminator->parameters(), adam);
  if (raw) {
    torch::serialize::InputArchive a, b;
    raw->archive.read("opt_gen", a);
    raw->archive.read("opt_disc", b);
    opt_gen.load(a);
    opt_disc.load(b);
  }

  TrainLog log(result.log_path, start_step);
  rds::DistortionContext ctx;
  ctx.surrogate = &models.surrogate;
  ctx.face_mask = rds::default_face_mask(cfg.frames, cfg.height, cfg.width);
  const auto& phi = perceptual();
  const auto stage_ends = cfg.curriculum.stage_end_epochs();

  auto save = [&](const std::string& label, std::int64_t steps_done) {
    CheckpointMeta meta;
    meta.global_step = steps_done;
    meta.label = label;
    const auto path = options.out_dir / (label + ".ckpt");
    save_checkpoint(path, cfg, meta, models, &opt_gen, &opt_disc);
    return path;
  };

  models.encoder->train();
  models.decoder->train();
  models.discriminator->train();
  std::int64_t perm_epoch = -1;
  std::vector<std::int64_t> perm;
  for (std::int64_t g = start_step; g < cfg.total_steps(); ++g) {
    const std::int64_t epoch = g / cfg.steps_per_epoch + 1;
    const std::int64_t in_epoch = g % cfg.steps_per_epoch;
    if (epoch != perm_epoch) {
      perm = epoch_permutation(cfg.seed, epoch, n_train);
      perm_epoch = epoch;
    }
    std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch_size));
    for (std::int64_t j = 0; j < cfg.batch_size; ++j) {
      idx[static_cast<std::size_t>(j)] = perm[static_cast<std::size_t>((in_epoch * cfg.batch_size + j) % n_train)];
    }
    const auto cover = train_clips.index_select(0, torch::tensor(idx, torch::kLong));

    std::mt19937_64 rng(derive_seed(cfg.seed, {kStep, static_cast<std::uint64_t>(g)}));
    const auto bits = random_message_batch(cfg.batch_size, cfg.payload_len, rng);
    const auto spec = rds::sample_spec(cfg.curriculum, epoch, rng);

    const auto watermarked = models.encoder(cover, bits);
    const auto attacked = rds::apply_distortion(watermarked, spec, ctx).tensor;
    const auto logits = models.decoder(attacked);

    const auto l_imp = obj::imperceptibility_loss(cover, watermarked, phi, cfg.loss_weights.beta);
    const auto l_adv =
        obj::adversarial_losses(torch::ones({cfg.batch_size}), models.discriminator->forward(watermarked)).encoder_term;
    const auto l_msg = obj::message_loss(bits, logits);
    const double lam = obj::lambda_msg(cfg.loss_weights, epoch - 1, cfg.total_epochs - 1);
    const auto total = obj::total_loss({l_imp, l_adv, l_msg}, cfg.loss_weights, epoch - 1, cfg.total_epochs - 1);

    StepRecord rec;
    rec.epoch = epoch;
    rec.step = g;
    rec.stage = stage_for_epoch(epoch, cfg).index;
    rec.kind = rds::kind_label(spec.kind);
    rec.l_imp = l_imp.item<double>();
    rec.l_adv = l_adv.item<double>();
    rec.l_msg = l_msg.item<double>();
    rec.lambda_msg = lam;
    rec.ber = metrics::ber(bits, dird::logits_to_bits(logits.detach()));
    rec.psnr = metrics::psnr(watermarked.detach(), cover, 2.0);

    if (!std::isfinite(total.item<double>())) {
      log.append(rec);
      throw Error("non-finite loss at step " + std::to_string(g) + ": " + TrainLog::format(rec));
    }

    opt_gen.zero_grad();
    total.backward();
    opt_gen.step();

    const auto d_terms = obj::adversarial_losses(models.discriminator, cover, watermarked.detach());
    opt_disc.zero_grad();
    d_terms.discriminator_term.backward();
    opt_disc.step();

    log.append(rec);
    result.records.push_back(rec);
    if (options.on_step) options.on_step(rec);

    if (in_epoch == cfg.steps_per_epoch - 1) {
      for (std::size_t s = 0; s < stage_ends.size(); ++s) {
        if (epoch == stage_ends[s] && (s == 0 || stage_ends[s] != stage_ends[s - 1])) {
          save("stage" + std::to_string(s + 1), g + 1);
        }
      }
      save("latest", g + 1);
    }
  }

  result.final_checkpoint = save("final", cfg.total_steps());
  if (options.plot) write_convergence_svg(TrainLog::read(result.log_path), options.out_dir / "convergence.svg");
  return result;
}

void write_convergence_svg(const std::vector<StepRecord>& records, const fs::path& path) {
  constexpr double W = 720, H = 260, pad = 48;
  auto panel = [&](double y0, const char* title, auto value, double lo, double hi) {
    std::ostringstream s;
    s << "<g transform=\"translate(0," << y0 << ")\">\n"
      << "<rect x=\"" << pad << "\" y=\"20\" width=\"" << W - 2 * pad << "\" height=\"" << H - 60
      << "\" fill=\"none\" stroke=\"#888\"/>\n"
      << "<text x=\"" << pad << "\" y=\"14\" font-size=\"13\" font-family=\"sans-serif\">" << title << "</text>\n"
      << "<text x=\"4\" y=\"28\" font-size=\"10\" font-family=\"sans-serif\">" << num(hi).substr(0, 6) << "</text>\n"
      << "<text x=\"4\" y=\"" << H - 40 << "\" font-size=\"10\" font-family=\"sans-serif\">" << num(lo).substr(0, 6)
      << "</text>\n";
    if (!records.empty()) {
      const double last = static_cast<double>(std::max<std::int64_t>(1, records.back().step));
      const std::size_t win = std::max<std::size_t>(1, records.size() / 100);
      s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.2\" points=\"";
      for (std::size_t i = 0; i < records.size(); i += win) {
        double acc = 0;
        std::size_t n = 0;
        for (std::size_t k = i; k < std::min(records.size(), i + win); ++k, ++n) acc += value(records[k]);
        const double v = std::clamp(acc / static_cast<double>(n), lo, hi);
        const double x = pad + (W - 2 * pad) * static_cast<double>(records[i].step) / last;
        const double y = 20 + (H - 60) * (1.0 - (v - lo) / (hi - lo));
        s << x << "," << y << " ";
      }
      s << "\"/>\n";
    }
    s << "<text x=\"" << W / 2 << "\" y=\"" << H - 22 << "\" font-size=\"11\" font-family=\"sans-serif\">step</text>\n"
      << "</g>\n";
    return s.str();
  };
  double psnr_hi = 10;
  for (const auto& r : records) psnr_hi = std::max(psnr_hi, std::min(r.psnr, 100.0));
  std::ofstream out(path, std::ios::binary);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << 2 * H << "\">\n"
      << panel(0, "Watermarked PSNR (dB)", [](const StepRecord& r) { return r.psnr; }, 0.0, std::ceil(psnr_hi / 10) * 10)
      << panel(H, "Batch BER", [](const StepRecord& r) { return r.ber; }, 0.0, 0.6) << "</svg>\n";
}

std::vector<rds::DistortionSpec> default_attacks(std::uint64_t seed) {
  std::vector<rds::DistortionSpec> out;
  for (auto k : rds::kAllKinds) out.push_back(rds::default_spec(k, derive_seed(seed, {static_cast<std::uint64_t>(k)})));
  return out;
}

torch::Tensor embed(Models& models, const torch::Tensor& cover, const torch::Tensor& bits) {
  torch::NoGradGuard guard;
  models.encoder->eval();
  return models.encoder(cover.unsqueeze(0), bits.reshape({1, -1}).to(cover.scalar_type())).squeeze(0);
}

torch::Tensor extract_logits(Models& models, const torch::Tensor& clip) {
  torch::NoGradGuard guard;
  models.decoder->eval();
  return models.decoder(clip.unsqueeze(0)).squeeze(0);
}

metrics::EvalReport evaluate(Models& models, const TrainConfig& cfg, const data::Manifest& manifest, data::Split split,
                             const EvalOptions& options) {
  torch::NoGradGuard guard;
  models.encoder->eval();
  models.decoder->eval();
  auto records = manifest.split(split);
  if (options.max_samples > 0 && static_cast<std::int64_t>(records.size()) > options.max_samples) {
    records.resize(static_cast<std::size_t>(options.max_samples));
  }
  const auto attacks = options.attacks.empty() ? default_attacks() : options.attacks;
  rds::DistortionContext ctx;
  ctx.surrogate = &models.surrogate;
  ctx.face_mask = rds::default_face_mask(cfg.frames, cfg.height, cfg.width);
  const auto& phi = perceptual();

  struct Path {
    std::string method;
    bool gif = false;
    double psnr = 0, ssim = 0, vif = 0, perceptual = 0;
    std::vector<double> errors;
  };
  std::vector<Path> paths(options.gif_path ? 2 : 1);
  paths[0].method = options.method;
  paths[0].gif = false;
  if (options.gif_path) {
    paths[1].method = options.method + "+gif";
    paths[1].gif = true;
  }
  for (auto& p : paths) p.errors.assign(attacks.size(), 0.0);

  const auto n = static_cast<std::int64_t>(records.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto cover = data::normalize(data::load_sample(manifest, records[static_cast<std::size_t>(i)]));
    data::check_gif_tensor(cover, {cfg.frames, cfg.height, cfg.width});
    std::mt19937_64 rng(derive_seed(options.seed, {static_cast<std::uint64_t>(i)}));
    const auto bits = random_message_batch(1, cfg.payload_len, rng);
    const auto wm = models.encoder(cover.unsqueeze(0), bits);
    for (auto& p : paths) {
      const auto x = p.gif ? codec::gif_quantize_roundtrip(wm) : wm;
      const auto px = metrics::to_pixel_units(x[0]), pc = metrics::to_pixel_units(cover);
      p.psnr += metrics::psnr(px, pc, 255.0);
      p.ssim += metrics::ssim(px, pc, 255.0);
      p.vif += metrics::vif_p(pc, px);
      p.perceptual += metrics::perceptual_distance(x, cover.unsqueeze(0), phi);
      for (std::size_t a = 0; a < attacks.size(); ++a) {
        auto spec = attacks[a];
        spec.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(i)});
        const auto attacked = rds::apply_distortion(x, spec, ctx).tensor;
        const auto decoded = dird::logits_to_bits(models.decoder(attacked));
        p.errors[a] += metrics::ber(bits, decoded);
      }
    }
  }

  metrics::EvalReport report;
  const double dn = static_cast<double>(std::max<std::int64_t>(1, n));
  for (const auto& p : paths) {
    report.rows.push_back({p.method, "none", "", n, "psnr", p.psnr / dn});
    report.rows.push_back({p.method, "none", "", n, "ssim", p.ssim / dn});
    report.rows.push_back({p.method, "none", "", n, "vif", p.vif / dn});
    report.rows.push_back({p.method, "none", "", n, "perceptual", p.perceptual / dn});
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      report.rows.push_back({p.method, rds::kind_label(attacks[a].kind), attacks[a].serialize(), n, "ber",
                             p.errors[a] / dn});
    }
  }
  return report;
}

}  // namespace gifguard::train
