#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lot/errors.hpp"
#include "lot/model.hpp"

namespace lot {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'O', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
    pos += n;
    return s;
  }
};

ParamSet expected_shapes(const Arch& a) {
  ParamSet p;
  p.embedding = Tensor(a.vocab, a.embed);
  p.w_hidden = Tensor(a.hidden, a.window * a.embed);
  p.b_hidden = Tensor(a.hidden, 1);
  p.w_out = Tensor(a.vocab, a.hidden);
  p.b_out = Tensor(a.vocab, 1);
  return p;
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const ModelParams& model) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.role));
  put_u32(out, static_cast<std::uint32_t>(model.arch.vocab));
  put_u32(out, static_cast<std::uint32_t>(model.arch.embed));
  put_u32(out, static_cast<std::uint32_t>(model.arch.hidden));
  put_u32(out, static_cast<std::uint32_t>(model.arch.window));
  put_f64(out, model.eps_smooth);
  std::uint32_t count = 0;
  model.params.for_each([&](const char*, const Tensor&) { ++count; });
  put_u32(out, count);
  model.params.for_each([&](const char* name, const Tensor& t) {
    const std::uint32_t len = static_cast<std::uint32_t>(std::strlen(name));
    put_u32(out, len);
    out.insert(out.end(), name, name + len);
    put_u32(out, static_cast<std::uint32_t>(t.rows));
    put_u32(out, static_cast<std::uint32_t>(t.cols));
    for (double d : t.v) put_f64(out, d);
  });
  return out;
}

ModelParams load_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw CheckpointError(CheckpointError::Kind::corrupt, "bad checkpoint magic");
  r.pos = 8;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "unsupported checkpoint version " + std::to_string(version));
  ModelParams m;
  const std::uint32_t role = r.u32();
  if (role > 3) throw CheckpointError(CheckpointError::Kind::corrupt, "bad role tag");
  m.role = static_cast<Role>(role);
  m.arch.vocab = static_cast<int>(r.u32());
  m.arch.embed = static_cast<int>(r.u32());
  m.arch.hidden = static_cast<int>(r.u32());
  m.arch.window = static_cast<int>(r.u32());
  m.eps_smooth = r.f64();
  const std::uint32_t count = r.u32();
  m.params = expected_shapes(m.arch);
  std::uint32_t seen = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    const std::string name = r.str(len);
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    Tensor* target = nullptr;
    m.params.for_each([&](const char* n, Tensor& t) {
      if (name == n) target = &t;
    });
    if (!target)
      throw CheckpointError(CheckpointError::Kind::corrupt, "unknown tensor " + name);
    if (rows != target->rows || cols != target->cols)
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "tensor " + name + " shape inconsistent with arch descriptor");
    for (double& d : target->v) d = r.f64();
    ++seen;
  }
  if (seen != 5)
    throw CheckpointError(CheckpointError::Kind::truncated, "missing parameter tensors");
  if (!m.params.all_finite())
    throw CheckpointError(CheckpointError::Kind::corrupt, "non-finite parameters");
  return m;
}

void save_checkpoint_file(const ModelParams& model, const std::string& path) {
  const auto bytes = save_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_checkpoint_file: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint_file: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

std::string checkpoint_to_json(const ModelParams& model) {
  json doc;
  doc["format"] = "lot-checkpoint";
  doc["version"] = kVersion;
  doc["role"] = to_string(model.role);
  doc["arch"] = {{"vocab", model.arch.vocab},
                 {"embed", model.arch.embed},
                 {"hidden", model.arch.hidden},
                 {"window", model.arch.window}};
  doc["eps_smooth"] = model.eps_smooth;
  json tensors = json::object();
  model.params.for_each([&](const char* name, const Tensor& t) {
    tensors[name] = {{"rows", t.rows}, {"cols", t.cols}, {"data", t.v}};
  });
  doc["tensors"] = std::move(tensors);
  return doc.dump();
}

ModelParams checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(CheckpointError::Kind::corrupt, e.what());
  }
  if (doc.value("format", "") != "lot-checkpoint")
    throw CheckpointError(CheckpointError::Kind::corrupt, "not a lot-checkpoint document");
  if (doc.value("version", 0u) != kVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch, "unsupported version");
  ModelParams m;
  m.role = role_from_string(doc.at("role").get<std::string>());
  const auto& a = doc.at("arch");
  m.arch = {a.at("vocab").get<int>(), a.at("embed").get<int>(), a.at("hidden").get<int>(),
            a.at("window").get<int>()};
  m.eps_smooth = doc.at("eps_smooth").get<double>();
  m.params = expected_shapes(m.arch);
  const auto& tensors = doc.at("tensors");
  m.params.for_each([&](const char* name, Tensor& t) {
    if (!tensors.contains(name))
      throw CheckpointError(CheckpointError::Kind::truncated,
                            std::string("missing tensor ") + name);
    const auto& jt = tensors[name];
    if (jt.at("rows").get<int>() != t.rows || jt.at("cols").get<int>() != t.cols)
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            std::string("tensor ") + name + " shape mismatch");
    t.v = jt.at("data").get<std::vector<double>>();
    if (t.v.size() != static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols))
      throw CheckpointError(CheckpointError::Kind::truncated,
                            std::string("tensor ") + name + " data length mismatch");
  });
  return m;
}

}  // namespace lot
