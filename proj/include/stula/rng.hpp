#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace stula {

// Finalizer from the splitmix64 generator (Steele/Lea/Flood). Full-avalanche
// 64-bit mix; also used to derive independent per-chain stream states.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-based stream: state advances by the golden-gamma constant and each
// output is mix64 of the state (splitmix64 proper). Streams are derived by
// hashing (seed, stream_id), so chain k's sequence depends only on the pair,
// never on how many other streams exist or in what order they are consumed.
// That is what makes multi-chain output independent of execution order.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : state_(mix64(mix64(seed) ^ mix64(stream_id + 0x632be59bd9b4e019ull))) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  // Uniform on the open interval (0,1): 53-bit mantissa centered in its cell,
  // so log() in Box-Muller can never see 0.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the sine partner is cached so gaussians
  // cost one transcendental pair per two draws.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace stula
