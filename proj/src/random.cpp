#include "hmmcnn/random.hpp"

#include <cmath>

#include "hmmcnn/error.hpp"

namespace hmmcnn {

std::size_t Rng::below(std::size_t bound) {
  const std::uint64_t b = bound;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % b);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % b);
}

double Rng::exponential() { return -std::log1p(-uniform()); }

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingSample: return "MissingSample";
    case ErrorKind::MalformedManifest: return "MalformedManifest";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::InvalidDimension: return "InvalidDimension";
    case ErrorKind::SymbolOutOfRange: return "SymbolOutOfRange";
    case ErrorKind::DegenerateSequence: return "DegenerateSequence";
    case ErrorKind::SampleTooShort: return "SampleTooShort";
    case ErrorKind::ModelMismatch: return "ModelMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::RaggedInput: return "RaggedInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidDimension:
    case ErrorKind::EmptyGrid:
      return 2;
    case ErrorKind::NumericFailure:
    case ErrorKind::StaleCache:
      return 4;
    default:
      return 3;
  }
}

}  // namespace hmmcnn
