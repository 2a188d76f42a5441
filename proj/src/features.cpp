#include "hmmcnn/features.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include "hmmcnn/error.hpp"

namespace hmmcnn::features {

namespace fs = std::filesystem;

FeatureVector extract_hidden_features(const corpus::OpcodeSample& sample,
                                      const std::map<std::string, hmm::HmmModel>& models,
                                      std::size_t l) {
  if (models.empty()) throw Error(ErrorKind::ModelMismatch, "no family models");
  if (sample.raw_length < l || sample.tokens.size() < l) {
    throw Error(ErrorKind::SampleTooShort, sample.sample_id + " has " +
                                               std::to_string(sample.tokens.size()) + " < " +
                                               std::to_string(l) + " tokens");
  }
  const auto& first = models.begin()->second;
  for (const auto& [family, model] : models) {
    if (model.n != first.n || model.m != first.m) {
      throw Error(ErrorKind::ModelMismatch, "family " + family + " disagrees on n or m");
    }
  }
  FeatureVector out;
  out.sample_id = sample.sample_id;
  out.label = sample.family;
  out.values.reserve(models.size() * l);
  const std::span<const corpus::Symbol> prefix(sample.tokens.data(), l);
  for (const auto& [family, model] : models) {
    for (auto s : hmm::posterior_decode(model, prefix).states) out.values.push_back(s);
  }
  return out;
}

FeatureVector raw_features(const corpus::OpcodeSample& sample, std::size_t l) {
  if (sample.raw_length < l || sample.tokens.size() < l) {
    throw Error(ErrorKind::SampleTooShort, sample.sample_id);
  }
  FeatureVector out;
  out.sample_id = sample.sample_id;
  out.label = sample.family;
  out.values.assign(sample.tokens.begin(), sample.tokens.begin() + static_cast<std::ptrdiff_t>(l));
  return out;
}

Scaler fit_scaler(const std::vector<FeatureVector>& train_vectors) {
  if (train_vectors.empty()) throw Error(ErrorKind::EmptyInput, "no training vectors");
  const std::size_t dims = train_vectors.front().values.size();
  Scaler scaler;
  scaler.mu.assign(dims, 0.0);
  scaler.sigma.assign(dims, 0.0);
  for (const auto& v : train_vectors) {
    if (v.values.size() != dims) throw Error(ErrorKind::RaggedInput, "vector " + v.sample_id);
    for (std::size_t d = 0; d < dims; ++d) scaler.mu[d] += v.values[d];
  }
  const double count = static_cast<double>(train_vectors.size());
  for (auto& mu : scaler.mu) mu /= count;
  for (const auto& v : train_vectors) {
    for (std::size_t d = 0; d < dims; ++d) {
      const double diff = v.values[d] - scaler.mu[d];
      scaler.sigma[d] += diff * diff;
    }
  }
  for (auto& s : scaler.sigma) s = std::sqrt(s / count);
  return scaler;
}

FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& v) {
  if (v.values.size() != scaler.dims()) {
    throw Error(ErrorKind::DimensionMismatch, "vector has " + std::to_string(v.values.size()) +
                                                  " dims, scaler " + std::to_string(scaler.dims()));
  }
  FeatureVector out = v;
  for (std::size_t d = 0; d < out.values.size(); ++d) {
    const double sigma = scaler.sigma[d] > 0.0 ? scaler.sigma[d] : 1.0;
    out.values[d] = (v.values[d] - scaler.mu[d]) / sigma;
  }
  return out;
}

namespace {

std::size_t ceil_sqrt(std::size_t len) {
  auto s = static_cast<std::size_t>(std::sqrt(static_cast<double>(len)));
  while (s * s < len) ++s;
  while (s > 0 && (s - 1) * (s - 1) >= len) --s;
  return s;
}

}  // namespace

ImageMatrix embed_image(const FeatureVector& v, std::size_t side) {
  if (v.values.empty()) throw Error(ErrorKind::EmptyInput, "empty feature vector");
  ImageMatrix image;
  image.side = side;
  image.payload_side = ceil_sqrt(v.values.size());
  if (image.payload_side > side) {
    throw Error(ErrorKind::PayloadTooLarge, std::to_string(image.payload_side) + " > " + std::to_string(side));
  }
  image.offset = (side - image.payload_side) / 2;
  image.pixels.assign(side * side, 0.0);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const std::size_t r = image.offset + i / image.payload_side;
    const std::size_t c = image.offset + i % image.payload_side;
    image.pixels[r * side + c] = v.values[i];
  }
  return image;
}

std::vector<double> extract_payload(const ImageMatrix& image, std::size_t len) {
  if (len > image.payload_side * image.payload_side) {
    throw Error(ErrorKind::PayloadTooLarge, "requested more cells than the payload holds");
  }
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    out[i] = image(image.offset + i / image.payload_side, image.offset + i % image.payload_side);
  }
  return out;
}

ExtractionResult extract_all_hidden_serial(const corpus::Corpus& corpus,
                                           const std::map<std::string, hmm::HmmModel>& models,
                                           std::size_t l) {
  ExtractionResult out;
  for (const auto& s : corpus.samples) {
    if (s.raw_length < l) {
      out.skipped.push_back(s.sample_id);
      continue;
    }
    out.vectors.push_back(extract_hidden_features(s, models, l));
  }
  return out;
}

ExtractionResult extract_all_hidden(const corpus::Corpus& corpus,
                                    const std::map<std::string, hmm::HmmModel>& models,
                                    std::size_t l) {
  const std::size_t count = corpus.samples.size();
  std::vector<FeatureVector> slots(count);
  std::vector<char> present(count, 0);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = corpus.samples[i];
    if (s.raw_length < l) continue;
    try {
      slots[i] = extract_hidden_features(s, models, l);
      present[i] = 1;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  ExtractionResult out;
  for (std::size_t i = 0; i < count; ++i) {
    if (present[i]) {
      out.vectors.push_back(std::move(slots[i]));
    } else {
      out.skipped.push_back(corpus.samples[i].sample_id);
    }
  }
  return out;
}

ExtractionResult extract_all_raw(const corpus::Corpus& corpus, std::size_t l) {
  ExtractionResult out;
  for (const auto& s : corpus.samples) {
    if (s.raw_length < l) {
      out.skipped.push_back(s.sample_id);
    } else {
      out.vectors.push_back(raw_features(s, l));
    }
  }
  return out;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                  static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw Error(ErrorKind::Io, "truncated feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_file(const fs::path& path, const std::vector<FeatureVector>& vectors) {
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().values.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write("HMF1", 4);
  put_u32(out, static_cast<std::uint32_t>(vectors.size()));
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u32(out, 0);
  for (const auto& v : vectors) {
    if (v.values.size() != dim) throw Error(ErrorKind::RaggedInput, "vector " + v.sample_id);
    for (double x : v.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
}

std::vector<std::vector<float>> read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::string(magic.data(), 4) != "HMF1") throw Error(ErrorKind::Io, "bad magic in " + path.string());
  const auto count = get_u32(in);
  const auto dim = get_u32(in);
  get_u32(in);
  std::vector<std::vector<float>> rows(count, std::vector<float>(dim));
  for (auto& row : rows) {
    for (auto& x : row) x = std::bit_cast<float>(get_u32(in));
  }
  return rows;
}

void write_feature_index(const fs::path& path, const std::vector<FeatureVector>& vectors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "sample_id,family\n";
  for (const auto& v : vectors) out << v.sample_id << ',' << v.label << '\n';
}

std::vector<std::pair<std::string, std::string>> read_feature_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorKind::Io, "bad index row in " + path.string());
    rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
  }
  return rows;
}

std::vector<FeatureVector> load_feature_set(const fs::path& features, const fs::path& index) {
  auto rows = read_feature_file(features);
  auto ids = read_feature_index(index);
  if (rows.size() != ids.size()) throw Error(ErrorKind::LengthMismatch, "feature file and index disagree");
  std::vector<FeatureVector> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i].values.assign(rows[i].begin(), rows[i].end());
    out[i].sample_id = ids[i].first;
    out[i].label = ids[i].second;
  }
  return out;
}

nlohmann::json to_json(const Scaler& scaler) {
  return {{"dims", scaler.dims()}, {"mu", scaler.mu}, {"sigma", scaler.sigma}};
}

Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s;
  s.mu = j.at("mu").get<std::vector<double>>();
  s.sigma = j.at("sigma").get<std::vector<double>>();
  if (s.mu.size() != s.sigma.size()) throw Error(ErrorKind::DimensionMismatch, "scaler mu/sigma sizes");
  return s;
}

void write_pgm(const fs::path& path, const ImageMatrix& image) {
  const auto [lo_it, hi_it] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P2\n" << image.side << ' ' << image.side << "\n255\n";
  for (std::size_t r = 0; r < image.side; ++r) {
    for (std::size_t c = 0; c < image.side; ++c) {
      const double v = span > 0.0 ? (image(r, c) - lo) / span : 0.0;
      out << static_cast<int>(std::lround(v * 255.0)) << (c + 1 == image.side ? '\n' : ' ');
    }
  }
}

}  // namespace hmmcnn::features
