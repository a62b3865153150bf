#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <torch/types.h>

namespace gifguard {

/// L-bit watermark payload.
struct MessageVector {
  std::vector<std::uint8_t> bits;  // each 0 or 1

  std::size_t size() const noexcept { return bits.size(); }

  static MessageVector random(std::size_t length, std::mt19937_64& rng);

  /// Hex form, most significant bit of each nibble first. Requires L % 4 == 0.
  std::string to_hex() const;
  static MessageVector from_hex(const std::string& hex, std::size_t length);

  /// Float tensor (L,) of 0/1 values.
  torch::Tensor to_tensor() const;
  static MessageVector from_tensor(const torch::Tensor& bits);

  bool operator==(const MessageVector&) const = default;
};

/// Random (B, L) 0/1 float tensor drawn from `gen`.
torch::Tensor random_message_batch(std::int64_t batch, std::int64_t length, std::mt19937_64& rng);

}  // namespace gifguard
