#include "elsa/binary_io.hpp"
#include "elsa/data.hpp"
#include "elsa/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iterator>

namespace elsa {

void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  nlohmann::ordered_json header;
  header["version"] = 1;
  header["dim"] = ds.data.dim();
  header["count"] = ds.data.size();
  out << header.dump() << '\n';

  const std::size_t d = ds.data.dim();
  std::vector<float> row(d + 2);
  for (std::size_t i = 0; i < ds.data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = static_cast<float>(ds.data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    row[d] = static_cast<float>(to_wire(ds.data.semi[i]));
    row[d + 1] = static_cast<float>(ds.truth.true_class[i]);
    write_f32_le(out, row);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing dataset header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset header in " + path.string() + ": " + e.what());
  }
  if (header.value("version", 0) != 1) throw IoError("unsupported dataset version in " + path.string());
  const auto d = header.at("dim").get<std::size_t>();
  const auto n = header.at("count").get<std::size_t>();

  LabeledDataset ds;
  ds.data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<float> row(d + 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (!read_f32_le(in, row)) {
      throw IoError("truncated dataset " + path.string() + " at row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double v = row[j];
      if (!std::isfinite(v)) throw NumericError("non-finite feature in " + path.string());
      ds.data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
    ds.data.semi.push_back(semi_from_wire(static_cast<int>(row[d])));
    ds.data.ids.push_back(static_cast<std::int64_t>(i));
    ds.truth.true_class.push_back(static_cast<int>(row[d + 1]));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing bytes after " + std::to_string(n) + " rows in " + path.string());
  }
  return ds;
}

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarChannels = 3;
constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * kCifarChannels;
constexpr std::size_t kCifarRecord = kCifarPixels + 1;

}  // namespace

Pool read_cifar10_binary(const std::filesystem::path& path, std::size_t pool_factor) {
  if (pool_factor == 0 || kCifarSide % pool_factor != 0) {
    throw ValidationError("pool_factor must divide 32");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t records = bytes.size() / kCifarRecord;
  if (bytes.size() % kCifarRecord != 0) {
    throw IoError("truncated record at offset " + std::to_string(records * kCifarRecord));
  }
  const std::size_t side = kCifarSide / pool_factor;
  const std::size_t dim = kCifarChannels * side * side;
  const double cell = static_cast<double>(pool_factor * pool_factor) * 255.0;

  Pool pool;
  pool.features = Matrix::Zero(static_cast<Eigen::Index>(records), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecord;
    const int label = bytes[offset];
    if (label > 9) {
      throw IoError("invalid label " + std::to_string(label) + " at offset " + std::to_string(offset));
    }
    pool.true_class.push_back(label);
    pool.subcluster.push_back(-1);
    const unsigned char* px = bytes.data() + offset + 1;
    for (std::size_t c = 0; c < kCifarChannels; ++c) {
      for (std::size_t y = 0; y < kCifarSide; ++y) {
        for (std::size_t x = 0; x < kCifarSide; ++x) {
          const std::size_t out = c * side * side + (y / pool_factor) * side + x / pool_factor;
          pool.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(out)) +=
              px[c * kCifarSide * kCifarSide + y * kCifarSide + x];
        }
      }
    }
    pool.features.row(static_cast<Eigen::Index>(r)) /= cell;
  }
  return pool;
}

}  // namespace elsa
