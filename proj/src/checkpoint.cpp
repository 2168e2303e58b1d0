#include "scfcrc/checkpoint.hpp"

#include <cstring>

#include "io_util.hpp"
#include "scfcrc/error.hpp"

namespace scfcrc {

namespace {

void write_string(std::ostream& out, const std::string& s) {
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
  const auto n = io::read_pod<uint32_t>(in, what);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError("truncated " + what);
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config,
                      const nn::ParamList& params) {
  auto out = io::open_out(path, true);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  io::write_pod<uint32_t>(out, kCheckpointVersion);
  write_string(out, kind);
  write_string(out, config);
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(params.size()));
  for (const auto* p : params) {
    write_string(out, p->name);
    io::write_pod<uint32_t>(out, static_cast<uint32_t>(p->value.rows()));
    io::write_pod<uint32_t>(out, static_cast<uint32_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) io::write_pod<float>(out, static_cast<float>(p->value(i, j)));
    }
  }
  if (!out) throw LoadError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("missing checkpoint " + path.string());
  auto in = io::open_in(path, true);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = io::read_pod<uint32_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) throw ParseError(path.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.kind = read_string(in, "checkpoint kind");
  ckpt.config = read_string(in, "checkpoint config");
  const auto count = io::read_pod<uint32_t>(in, "tensor count");
  for (uint32_t t = 0; t < count; ++t) {
    std::string name = read_string(in, "tensor name");
    const auto rows = io::read_pod<uint32_t>(in, "tensor rows");
    const auto cols = io::read_pod<uint32_t>(in, "tensor cols");
    nn::Mat m(rows, cols);
    for (uint32_t i = 0; i < rows; ++i) {
      for (uint32_t j = 0; j < cols; ++j) m(i, j) = io::read_pod<float>(in, "tensor " + name);
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, const nn::ParamList& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                     std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ckpt.tensors[i];
    if (name != params[i]->name || value.rows() != params[i]->value.rows() || value.cols() != params[i]->value.cols()) {
      throw ShapeError("checkpoint tensor " + name + " does not match model parameter " + params[i]->name);
    }
    params[i]->value = value;
  }
}

}  // namespace scfcrc
