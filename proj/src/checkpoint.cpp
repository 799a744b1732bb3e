#include "elsa/checkpoint.hpp"

#include "elsa/binary_io.hpp"
#include "elsa/errors.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace elsa {

namespace {

constexpr const char* kFormat = "elsa-checkpoint";

std::vector<float> narrow(const double* data, std::size_t n) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(data[i]);
  return out;
}

void read_section(std::istream& in, double* dst, std::size_t n, const char* name) {
  std::vector<float> buf(n);
  if (!read_f32_le(in, buf)) throw ValidationError(std::string("checkpoint section '") + name + "' is truncated");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(buf[i])) throw NumericError(std::string("non-finite value in checkpoint section '") + name + "'");
    dst[i] = buf[i];
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const EncoderDims& d = ckpt.encoder.dims();
  const Matrix& protos = ckpt.prototypes.vectors;
  nlohmann::ordered_json m;
  m["format"] = kFormat;
  m["version"] = kCheckpointVersion;
  m["stage"] = ckpt.stage;
  m["epoch"] = ckpt.epoch;
  m["data_std"] = ckpt.data_std;
  m["rng_state"] = ckpt.rng_state;
  m["config"] = to_json(ckpt.config);
  m["encoder"] = {{"input", d.input}, {"hidden", d.hidden}, {"embed", d.embed}, {"shifts", d.shifts}};
  m["prototypes"] = {{"rows", protos.rows()},
                     {"cols", protos.cols()},
                     {"last_refresh_epoch", ckpt.prototypes.last_refresh_epoch}};
  m["sections"] = {{{"name", "encoder"}, {"count", ckpt.encoder.flat().size()}},
                   {{"name", "prototypes"}, {"count", protos.size()}}};

  std::ostringstream out(std::ios::binary);
  out << m.dump() << '\n';
  write_f32_le(out, narrow(ckpt.encoder.flat().data(), static_cast<std::size_t>(ckpt.encoder.flat().size())));
  write_f32_le(out, narrow(protos.data(), static_cast<std::size_t>(protos.size())));
  return out.str();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("checkpoint is empty");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (!m.is_object() || m.value("format", "") != kFormat) throw ValidationError("not an elsa checkpoint");
  const int version = m.value("version", -1);
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  try {
    ckpt.stage = m.at("stage").get<std::string>();
    ckpt.epoch = m.at("epoch").get<std::size_t>();
    ckpt.data_std = m.at("data_std").get<double>();
    ckpt.rng_state = m.at("rng_state").get<std::string>();
    ckpt.config = config_from_json(m.at("config"));

    EncoderDims dims;
    dims.input = m.at("encoder").at("input").get<std::size_t>();
    dims.hidden = m.at("encoder").at("hidden").get<std::size_t>();
    dims.embed = m.at("encoder").at("embed").get<std::size_t>();
    dims.shifts = m.at("encoder").at("shifts").get<std::size_t>();
    const auto rows = m.at("prototypes").at("rows").get<Eigen::Index>();
    const auto cols = m.at("prototypes").at("cols").get<Eigen::Index>();
    ckpt.prototypes.last_refresh_epoch = m.at("prototypes").at("last_refresh_epoch").get<int>();

    const auto& sections = m.at("sections");
    if (sections.size() != 2 || sections[0].at("name") != "encoder" || sections[1].at("name") != "prototypes") {
      throw ValidationError("checkpoint sections must be [encoder, prototypes]");
    }
    ckpt.encoder = EncoderParams(dims);
    const auto enc_count = sections[0].at("count").get<std::size_t>();
    const auto proto_count = sections[1].at("count").get<std::size_t>();
    if (enc_count != dims.parameter_count()) {
      throw ValidationError("encoder section holds " + std::to_string(enc_count) + " values, dims need " +
                            std::to_string(dims.parameter_count()));
    }
    if (proto_count != static_cast<std::size_t>(rows * cols)) {
      throw ValidationError("prototype section length does not match its shape");
    }
    if (rows > 0 && static_cast<std::size_t>(cols) != dims.embed) {
      throw ValidationError("prototype width differs from the encoder embedding size");
    }
    read_section(in, ckpt.encoder.flat().data(), enc_count, "encoder");
    ckpt.prototypes.vectors.resize(rows, cols);
    read_section(in, ckpt.prototypes.vectors.data(), proto_count, "prototypes");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes after checkpoint sections");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace elsa
