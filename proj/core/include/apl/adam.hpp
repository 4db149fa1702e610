#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace apl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector. Moment buffers are owned
/// by one trainer and persist across step() calls.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, const AdamConfig& cfg);

  std::size_t size() const noexcept { return m_.size(); }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

  /// Binary layout: "APLA", u32 version, u64 n, u64 t, n f64 m, n f64 v (little-endian).
  void save(const std::filesystem::path& path) const;
  static Adam load(const std::filesystem::path& path);

  friend bool operator==(const Adam&, const Adam&) = default;

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

}  // namespace apl
