#include "splitnet/checkpoint.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "splitnet/error.hpp"
#include "splitnet/field.hpp"

namespace splitnet {

namespace fs = std::filesystem;

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void spill(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

std::string file_name(const std::string& tensor) {
  std::string out;
  for (char c : tensor) {
    if (c == '/' || c == '[') {
      out += '_';
    } else if (c != ']') {
      out += c;
    }
  }
  return out + ".splf";
}

Field as_blob(const Tensor& t) {
  const int rows = t.rank() >= 2 ? t.dim(t.rank() - 2) : 1;
  const int cols = t.rank() >= 2 ? t.dim(t.rank() - 1) : 1;
  const int channels = static_cast<int>(t.size() / (static_cast<std::size_t>(rows) * cols));
  return Field(GridSpec{0, rows, cols, 1.0}, channels, t.data);
}

std::vector<int> parse_shape(const std::string& s, const std::string& name) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("checkpoint: tensor " + name + " has a malformed shape '" + s + "'");
    }
  }
  return out;
}

std::string shape_text(const std::vector<int>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

}  // namespace

std::string sha256_file(const std::string& path) { return sha256_hex(slurp(path)); }

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  ckpt.theta.validate(ckpt.config);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  Ini manifest;
  Ini head;
  head.push_back({"format_version", Ini(std::to_string(kCheckpointVersion))});
  manifest.push_back({"checkpoint", head});
  manifest.push_back({"meta", ckpt.meta});
  manifest.push_back({"solver", solver_config_to_ini(ckpt.config)});

  int index = 0;
  for_each_tensor(ckpt.theta, ckpt.config, [&](const TensorInfo& info, const Tensor& t) {
    const std::string file = file_name(info.name);
    const std::vector<unsigned char> bytes = encode_field(as_blob(t));
    spill((fs::path(dir) / file).string(), bytes);
    Ini sec;
    sec.push_back({"name", Ini(info.name)});
    sec.push_back({"file", Ini(file)});
    sec.push_back({"shape", Ini(shape_text(t.shape))});
    sec.push_back({"sha256", Ini(sha256_hex(bytes))});
    manifest.push_back({"tensor." + std::to_string(index++), sec});
  });
  write_ini((fs::path(dir) / "manifest.ini").string(), manifest);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.ini").string();
  if (!fs::exists(manifest_path)) throw IoError("no checkpoint manifest at " + manifest_path);
  const Ini manifest = read_ini(manifest_path);

  const auto version = ini_section(manifest, "checkpoint").get_optional<int>("format_version");
  if (!version) throw IoError(manifest_path + " lacks checkpoint.format_version");
  if (*version != kCheckpointVersion)
    throw UnsupportedVersion("checkpoint format version " + std::to_string(*version) + " is not supported (this build reads " +
                             std::to_string(kCheckpointVersion) + ")");

  Checkpoint ckpt;
  ckpt.meta = ini_section(manifest, "meta");
  ckpt.config = solver_config_from_ini(ini_section(manifest, "solver"));

  std::map<std::string, Tensor> stored;
  for (const auto& [section, sec] : manifest) {
    if (section.rfind("tensor.", 0) != 0) continue;
    const auto name = sec.get_optional<std::string>("name");
    const auto file = sec.get_optional<std::string>("file");
    const auto shape = sec.get_optional<std::string>("shape");
    const auto hash = sec.get_optional<std::string>("sha256");
    if (!name || !file || !shape || !hash) throw IoError(manifest_path + ": [" + section + "] is incomplete");
    if (file->find('/') != std::string::npos || *file == ".." )
      throw IoError(manifest_path + ": [" + section + "] names a file outside the checkpoint");
    const std::string path = (fs::path(dir) / *file).string();
    const std::vector<unsigned char> bytes = slurp(path);
    if (sha256_hex(bytes) != *hash)
      throw HashMismatch("checkpoint blob " + path + " does not match its recorded SHA-256; refusing to load");
    const Field f = decode_field(bytes);
    Tensor t(parse_shape(*shape, *name));
    if (t.size() != f.values.size())
      throw ValidationError("checkpoint tensor " + *name + " holds " + std::to_string(f.values.size()) +
                            " values, shape " + *shape + " needs " + std::to_string(t.size()));
    t.data = f.values;
    if (!stored.emplace(*name, std::move(t)).second) throw ValidationError("checkpoint lists " + *name + " twice");
  }

  ckpt.theta = ControlVariables::zeros(ckpt.config);
  std::size_t used = 0;
  for_each_tensor(ckpt.theta, ckpt.config, [&](const TensorInfo& info, Tensor& t) {
    auto it = stored.find(info.name);
    if (it == stored.end()) throw ValidationError("checkpoint lacks tensor " + info.name);
    if (it->second.shape != t.shape)
      throw ValidationError("checkpoint tensor " + info.name + " has shape " + it->second.shape_string() +
                            ", config needs " + t.shape_string());
    t = it->second;
    ++used;
  });
  if (used != stored.size())
    throw ValidationError("checkpoint holds " + std::to_string(stored.size() - used) +
                          " tensors the config does not use");
  ckpt.theta.validate(ckpt.config);
  return ckpt;
}

}  // namespace splitnet
