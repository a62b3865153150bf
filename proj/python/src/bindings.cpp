#include <cstring>
#include <memory>
#include <random>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gifguard/data_pipeline.hpp"
#include "gifguard/dird_decoder.hpp"
#include "gifguard/error.hpp"
#include "gifguard/gif_codec.hpp"
#include "gifguard/message.hpp"
#include "gifguard/metrics.hpp"
#include "gifguard/rds.hpp"
#include "gifguard/training.hpp"

namespace py = pybind11;
using namespace gifguard;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Frames frames_from_array(const U8Array& a) {
  if (a.ndim() != 4 || a.shape(3) != 3) throw Error("expected a (T, H, W, 3) uint8 array");
  Frames f(a.shape(0), a.shape(1), a.shape(2));
  std::memcpy(f.rgb.data(), a.data(), f.rgb.size());
  return f;
}

U8Array frames_to_array(const Frames& f) {
  U8Array out({f.frames, f.height, f.width, std::int64_t{3}});
  std::memcpy(out.mutable_data(), f.rgb.data(), f.rgb.size());
  return out;
}

torch::Tensor tensor_from_array(const F64Array& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

F64Array array_from_tensor(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous();
  F64Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), static_cast<std::size_t>(c.numel()) * sizeof(double));
  return out;
}

std::vector<std::uint8_t> bytes_of(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

class Model {
 public:
  explicit Model(const std::filesystem::path& ckpt)
      : ck_(std::make_unique<train::Checkpoint>(train::load_checkpoint(ckpt))) {}

  std::int64_t payload_len() const { return ck_->cfg.payload_len; }
  py::tuple clip_shape() const { return py::make_tuple(ck_->cfg.frames, ck_->cfg.height, ck_->cfg.width); }

  U8Array embed(const U8Array& frames, const std::string& message_hex) {
    const auto m = MessageVector::from_hex(message_hex, static_cast<std::size_t>(ck_->cfg.payload_len));
    const auto clip = checked(frames);
    return frames_to_array(data::denormalize(train::embed(ck_->models, data::normalize(clip), m.to_tensor())));
  }

  py::tuple extract(const U8Array& frames) {
    const auto logits = train::extract_logits(ck_->models, data::normalize(checked(frames)));
    const auto bits = MessageVector::from_tensor(dird::logits_to_bits(logits));
    return py::make_tuple(bits.to_hex(), array_from_tensor(logits));
  }

  U8Array attack(const U8Array& frames, const std::string& spec) {
    rds::DistortionContext ctx;
    ctx.surrogate = &ck_->models.surrogate;
    torch::NoGradGuard g;
    const auto clip = data::normalize(frames_from_array(frames));
    return frames_to_array(data::denormalize(rds::apply_distortion(clip, rds::DistortionSpec::parse(spec), ctx).tensor));
  }

 private:
  Frames checked(const U8Array& frames) const {
    auto f = frames_from_array(frames);
    const auto& c = ck_->cfg;
    if (f.frames != c.frames || f.height != c.height || f.width != c.width) {
      throw Error("reprofile required: checkpoint expects (T,H,W)=(" + std::to_string(c.frames) + "," +
                  std::to_string(c.height) + "," + std::to_string(c.width) + ")");
    }
    return f;
  }

  std::unique_ptr<train::Checkpoint> ck_;
};

}  // namespace

PYBIND11_MODULE(_gifguard, m) {
  m.doc() = "GIF watermarking core: codec, metrics, attacks and trained models";
  py::register_exception<Error>(m, "GifGuardError", PyExc_RuntimeError);

  m.def("gif_read", [](const std::filesystem::path& p) {
    const auto g = codec::gif_read(p);
    return py::make_tuple(frames_to_array(codec::to_frames(g)), g.frame_delay_ms);
  }, py::arg("path"), "Decode a GIF to ((T,H,W,3) uint8 frames, frame delay in ms).");
  m.def("gif_write", [](const std::filesystem::path& p, const U8Array& frames, int delay_ms, int colors) {
    codec::gif_write(codec::quantize_clip(frames_from_array(frames), colors, delay_ms), p);
  }, py::arg("path"), py::arg("frames"), py::arg("delay_ms") = 100, py::arg("colors") = 256,
     "Quantize with a global median-cut palette and Floyd-Steinberg dithering, then write a GIF89a file.");
  m.def("lzw_encode", [](const py::bytes& idx, int mcs) { return to_bytes(codec::lzw_encode(bytes_of(idx), mcs)); },
        py::arg("indices"), py::arg("min_code_size"));
  m.def("lzw_decode", [](const py::bytes& b, int mcs) { return to_bytes(codec::lzw_decode(bytes_of(b), mcs)); },
        py::arg("data"), py::arg("min_code_size"));

  m.def("synth_face", [](std::uint64_t seed, std::int64_t t, std::int64_t h, std::int64_t w) {
    return frames_to_array(data::synth_face_gif(seed, t, h, w).frames);
  }, py::arg("seed"), py::arg("frames") = 10, py::arg("height") = 64, py::arg("width") = 64);
  m.def("build_dataset", [](const std::filesystem::path& out, std::int64_t n_train, std::int64_t n_val,
                            std::int64_t n_test, std::int64_t t, std::int64_t h, std::int64_t w, std::uint64_t seed,
                            bool overwrite) {
    data::DatasetOptions o;
    o.shape = {t, h, w};
    o.seed = seed;
    o.overwrite = overwrite;
    data::build_dataset(n_train, n_val, n_test, out, o);
    return out / data::kManifestName;
  }, py::arg("out"), py::arg("n_train"), py::arg("n_val"), py::arg("n_test"), py::arg("frames") = 10,
     py::arg("height") = 64, py::arg("width") = 64, py::arg("seed") = 0, py::arg("overwrite") = false);

  m.def("train", [](const std::filesystem::path& config, const std::filesystem::path& manifest,
                    const std::filesystem::path& out) {
    py::gil_scoped_release release;
    train::TrainOptions o;
    o.out_dir = out;
    o.plot = false;
    return train::train(train::TrainConfig::load(config), data::read_manifest(manifest), o).final_checkpoint;
  }, py::arg("config"), py::arg("manifest"), py::arg("out"), "Train from a config file; returns the final checkpoint path.");

  m.def("psnr", [](const F64Array& a, const F64Array& b, double max_val) {
    return metrics::psnr(tensor_from_array(a), tensor_from_array(b), max_val);
  }, py::arg("a"), py::arg("b"), py::arg("max_val") = 255.0);
  m.def("ssim", [](const F64Array& a, const F64Array& b, double max_val) {
    return metrics::ssim(tensor_from_array(a), tensor_from_array(b), max_val);
  }, py::arg("a"), py::arg("b"), py::arg("max_val") = 255.0, "Mean SSIM over the leading (plane) axis of (P,H,W) arrays.");
  m.def("vif_p", [](const F64Array& ref, const F64Array& dist) {
    return metrics::vif_p(tensor_from_array(ref), tensor_from_array(dist));
  }, py::arg("reference"), py::arg("distorted"));
  m.def("ber", [](const F64Array& a, const F64Array& b) { return metrics::ber(tensor_from_array(a), tensor_from_array(b)); },
        py::arg("m"), py::arg("m_hat"));

  m.def("attack", [](const U8Array& frames, const std::string& spec) {
    torch::NoGradGuard g;
    const auto clip = data::normalize(frames_from_array(frames));
    return frames_to_array(data::denormalize(rds::apply_distortion(clip, rds::DistortionSpec::parse(spec)).tensor));
  }, py::arg("frames"), py::arg("spec"), "Apply one serialized distortion spec, e.g. 'kind=diff_jpeg;quality=75;seed=0'.");
  m.def("default_spec", [](const std::string& kind, std::uint64_t seed) {
    return rds::default_spec(rds::parse_kind(kind), seed).serialize();
  }, py::arg("kind"), py::arg("seed") = 0);
  m.def("stage_for_epoch", [](std::int64_t epoch, std::int64_t total_epochs) {
    rds::CurriculumSchedule s;
    s.total_epochs = total_epochs;
    const auto d = rds::stage_for_epoch(s, epoch);
    return py::make_tuple(d.index, d.hard_probability);
  }, py::arg("epoch"), py::arg("total_epochs"));

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("payload_len", &Model::payload_len)
      .def_property_readonly("clip_shape", &Model::clip_shape)
      .def("embed", &Model::embed, py::arg("frames"), py::arg("message_hex"))
      .def("extract", &Model::extract, py::arg("frames"), "Returns (message hex, logits).")
      .def("attack", &Model::attack, py::arg("frames"), py::arg("spec"),
           "Like attack() but with the checkpoint's fitted surrogate available.");
}
