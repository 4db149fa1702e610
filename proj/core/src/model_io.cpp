#include "apl/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "apl/errors.hpp"
#include "binary_io.hpp"

namespace apl {

namespace {
constexpr char kMagic[4] = {'A', 'P', 'L', 'M'};
}

void write_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const Architecture& a = params.arch();
  out.write(kMagic, 4);
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put<std::uint32_t>(out, a.vocab_size);
  binio::put<std::uint32_t>(out, a.context);
  binio::put<std::uint32_t>(out, a.embed);
  binio::put<std::uint32_t>(out, a.hidden);
  binio::put<std::uint64_t>(out, params.size());
  for (double v : params.values()) binio::put(out, v);
  if (!out) throw Error("failed writing " + path.string());
}

PolicyParams read_checkpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + name);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw IntegrityError("bad magic in checkpoint " + name);
  std::uint32_t version = 0;
  if (!binio::get(in, version)) throw IntegrityError("truncated checkpoint " + name);
  if (version != kCheckpointVersion)
    throw IncompatibleVersion("checkpoint " + name + " has format version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));
  Architecture a;
  std::uint64_t count = 0;
  if (!binio::get(in, a.vocab_size) || !binio::get(in, a.context) || !binio::get(in, a.embed) ||
      !binio::get(in, a.hidden) || !binio::get(in, count))
    throw IntegrityError("truncated header in checkpoint " + name);
  try {
    a.validate();
  } catch (const InvalidInput& e) {
    throw IntegrityError("invalid architecture in checkpoint " + name + ": " + e.what());
  }
  if (count != a.parameter_count())
    throw IntegrityError("parameter count " + std::to_string(count) + " does not match architecture in checkpoint " + name);
  std::vector<double> values(count);
  for (auto& v : values) {
    if (!binio::get(in, v)) throw IntegrityError("truncated parameters in checkpoint " + name);
    if (!std::isfinite(v)) throw IntegrityError("non-finite parameter in checkpoint " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("trailing bytes in checkpoint " + name);
  return PolicyParams(a, std::move(values));
}

std::vector<TokenSequence> read_corpus(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open corpus " + path.string());
  std::vector<TokenSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      auto ids = vocab.encode(line);
      if (ids.empty()) continue;
      TokenSequence seq{std::move(ids), false};
      seq.terminated = seq.ends_with_eos();
      validate_sequence(seq, vocab.size());
      out.push_back(std::move(seq));
    } catch (const InvalidInput& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                  const std::vector<TokenSequence>& sequences) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      if (i) out << ' ';
      out << vocab.token(seq.tokens[i]);
    }
    out << '\n';
  }
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace apl
