#include "apl/adam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "apl/errors.hpp"
#include "binary_io.hpp"

namespace apl {

namespace {
constexpr char kMagic[4] = {'A', 'P', 'L', 'A'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void Adam::step(std::span<double> params, std::span<const double> grad, const AdamConfig& cfg) {
  if (m_.empty() && t_ == 0) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw InvalidInput("Adam state size does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * grad[i];
    v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void Adam::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  binio::put<std::uint32_t>(out, kVersion);
  binio::put<std::uint64_t>(out, m_.size());
  binio::put<std::uint64_t>(out, t_);
  for (double x : m_) binio::put(out, x);
  for (double x : v_) binio::put(out, x);
  if (!out) throw Error("failed writing " + path.string());
}

Adam Adam::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open optimizer state " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw IntegrityError("bad magic in optimizer state " + path.string());
  std::uint32_t version = 0;
  if (!binio::get(in, version)) throw IntegrityError("truncated optimizer state " + path.string());
  if (version != kVersion)
    throw IncompatibleVersion("optimizer state " + path.string() + " has version " +
                              std::to_string(version) + ", expected " + std::to_string(kVersion));
  std::uint64_t n = 0;
  Adam adam;
  if (!binio::get(in, n) || !binio::get(in, adam.t_))
    throw IntegrityError("truncated optimizer state " + path.string());
  adam.m_.resize(n);
  adam.v_.resize(n);
  for (auto& x : adam.m_)
    if (!binio::get(in, x)) throw IntegrityError("truncated optimizer state " + path.string());
  for (auto& x : adam.v_)
    if (!binio::get(in, x)) throw IntegrityError("truncated optimizer state " + path.string());
  if (in.peek() != std::char_traits<char>::eof())
    throw IntegrityError("trailing bytes in optimizer state " + path.string());
  return adam;
}

}  // namespace apl
