#include "hanme/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "hanme/error.hpp"

namespace hanme {

namespace {
constexpr const char* kMagic = "HANME-CKPT v1";
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out << kMagic << "\n";
  out << "meta " << (ckpt.meta_json.empty() ? "{}" : ckpt.meta_json) << "\n";
  out << "tensors " << ckpt.tensors.size() << "\n";
  for (const auto& [name, t] : ckpt.tensors) {
    out << "tensor " << name << " " << t.ndim();
    for (std::size_t d : t.shape()) out << " " << d;
    out << "\n";
  }
  out << "data\n";
  for (const auto& [name, t] : ckpt.tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw CheckpointError(path + ": bad magic (want '" + std::string(kMagic) + "')");
  }
  Checkpoint ckpt;
  if (!std::getline(in, line) || line.rfind("meta ", 0) != 0) {
    throw CheckpointError(path + ": missing meta line");
  }
  ckpt.meta_json = line.substr(5);
  if (!std::getline(in, line) || line.rfind("tensors ", 0) != 0) {
    throw CheckpointError(path + ": missing tensor count");
  }
  const std::size_t count = std::stoul(line.substr(8));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw CheckpointError(path + ": truncated header");
    std::istringstream ss(line);
    std::string tag, name;
    std::size_t ndim = 0;
    ss >> tag >> name >> ndim;
    if (tag != "tensor" || ss.fail() || ndim > 3) {
      throw CheckpointError(path + ": bad tensor line '" + line + "'");
    }
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) ss >> d;
    if (ss.fail()) throw CheckpointError(path + ": bad tensor shape in '" + line + "'");
    ckpt.tensors.emplace_back(name, Tensor(shape));
  }
  if (!std::getline(in, line) || line != "data") {
    throw CheckpointError(path + ": missing data marker");
  }
  for (auto& [name, t] : ckpt.tensors) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double))) {
      throw CheckpointError(path + ": truncated data for tensor '" + name + "'");
    }
  }
  return ckpt;
}

}  // namespace hanme
