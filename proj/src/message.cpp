#include "gifguard/message.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "gifguard/error.hpp"
#include "gifguard/rng.hpp"

namespace gifguard {

at::Generator make_generator(std::uint64_t seed) {
  return at::detail::createCPUGenerator(seed);
}

MessageVector MessageVector::random(std::size_t length, std::mt19937_64& rng) {
  MessageVector m;
  m.bits.resize(length);
  for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return m;
}

std::string MessageVector::to_hex() const {
  if (bits.size() % 4 != 0) throw Error("message length must be a multiple of 4 for hex form");
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    const int v = (bits[i] << 3) | (bits[i + 1] << 2) | (bits[i + 2] << 1) | bits[i + 3];
    out.push_back(kDigits[v]);
  }
  return out;
}

MessageVector MessageVector::from_hex(const std::string& hex, std::size_t length) {
  if (hex.size() * 4 != length) {
    throw Error("message must be " + std::to_string(length / 4) + " hex digits, got " +
                std::to_string(hex.size()));
  }
  MessageVector m;
  m.bits.reserve(length);
  for (char ch : hex) {
    int v = 0;
    if (ch >= '0' && ch <= '9') v = ch - '0';
    else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
    else throw Error(std::string("invalid hex digit '") + ch + "'");
    for (int b = 3; b >= 0; --b) m.bits.push_back(static_cast<std::uint8_t>((v >> b) & 1));
  }
  return m;
}

torch::Tensor MessageVector::to_tensor() const {
  auto t = torch::empty({static_cast<std::int64_t>(bits.size())}, torch::kFloat32);
  auto a = t.accessor<float, 1>();
  for (std::size_t i = 0; i < bits.size(); ++i) a[static_cast<std::int64_t>(i)] = bits[i];
  return t;
}

MessageVector MessageVector::from_tensor(const torch::Tensor& bits) {
  auto flat = bits.detach().to(torch::kFloat64).contiguous().view(-1);
  auto a = flat.accessor<double, 1>();
  MessageVector m;
  m.bits.resize(static_cast<std::size_t>(flat.numel()));
  for (std::int64_t i = 0; i < flat.numel(); ++i) m.bits[static_cast<std::size_t>(i)] = a[i] > 0.5 ? 1 : 0;
  return m;
}

torch::Tensor random_message_batch(std::int64_t batch, std::int64_t length, std::mt19937_64& rng) {
  auto t = torch::empty({batch, length}, torch::kFloat32);
  auto a = t.accessor<float, 2>();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < length; ++i) a[b][i] = static_cast<float>(rng() >> 63);
  }
  return t;
}

}  // namespace gifguard
