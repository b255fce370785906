#include "resseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace resseg {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'E', 'G'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError(origin_ + ": truncated archive");
  }
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_list(const std::map<std::string, std::string>& m) {
  std::string out;
  for (const auto& [k, v] : m) out += "  " + k + " " + v + "\n";
  return out;
}

std::string dims_str(const std::vector<std::uint32_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + ")";
}

}  // namespace

ArchiveEntry ArchiveEntry::tensor(std::string name, const Tensor<float>& t) {
  ArchiveEntry e;
  e.name = std::move(name);
  e.dtype = Dtype::F32;
  const Shape s = t.shape();
  e.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  e.f32 = t.values();
  return e;
}

ArchiveEntry ArchiveEntry::utf8(std::string name, std::string text) {
  ArchiveEntry e;
  e.name = std::move(name);
  e.dtype = Dtype::Utf8;
  e.dims = {static_cast<std::uint32_t>(text.size())};
  e.text = std::move(text);
  return e;
}

ArchiveEntry ArchiveEntry::words(std::string name, std::vector<std::uint32_t> values) {
  ArchiveEntry e;
  e.name = std::move(name);
  e.dtype = Dtype::U32;
  e.dims = {static_cast<std::uint32_t>(values.size())};
  e.u32 = std::move(values);
  return e;
}

Tensor<float> ArchiveEntry::to_tensor() const {
  if (dtype != Dtype::F32 || dims.size() != 4) {
    throw IoError("archive entry " + name + " is not a rank-4 f32 tensor");
  }
  return Tensor<float>(Shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                             static_cast<int>(dims[2]), static_cast<int>(dims[3])},
                       f32);
}

const ArchiveEntry* Archive::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  std::string out(kMagic, 4);
  put_u32(out, kArchiveVersion);
  put_u32(out, static_cast<std::uint32_t>(archive.entries.size()));
  for (const auto& e : archive.entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.dtype));
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    const std::size_t n = element_count(e.dims);
    switch (e.dtype) {
      case Dtype::F32:
        if (e.f32.size() != n) throw IoError("archive entry " + e.name + ": size mismatch");
        for (float v : e.f32) put_u32(out, std::bit_cast<std::uint32_t>(v));
        break;
      case Dtype::U32:
        if (e.u32.size() != n) throw IoError("archive entry " + e.name + ": size mismatch");
        for (auto v : e.u32) put_u32(out, v);
        break;
      case Dtype::Utf8:
        if (e.text.size() != n) throw IoError("archive entry " + e.name + ": size mismatch");
        out += e.text;
        break;
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  if (r.take(4) != std::string(kMagic, 4)) throw IoError(path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw IoError(path.string() + ": unsupported archive version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  Archive a;
  a.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    e.name = r.take(r.u32());
    const std::uint32_t tag = r.u32();
    if (tag > 2) throw IoError(path.string() + ": unknown dtype tag " + std::to_string(tag));
    e.dtype = static_cast<Dtype>(tag);
    const std::uint32_t rank = r.u32();
    e.dims.resize(rank);
    for (auto& d : e.dims) d = r.u32();
    const std::size_t n = element_count(e.dims);
    if (e.dtype == Dtype::F32) {
      e.f32.resize(n);
      for (auto& v : e.f32) v = std::bit_cast<float>(r.u32());
    } else if (e.dtype == Dtype::U32) {
      e.u32.resize(n);
      for (auto& v : e.u32) v = r.u32();
    } else {
      e.text = r.take(n);
    }
    a.entries.push_back(std::move(e));
  }
  if (!r.done()) throw IoError(path.string() + ": trailing bytes after last entry");
  return a;
}

Archive make_checkpoint(Model<float>& model, const LambState<float>* optimizer) {
  Archive a;
  a.entries.push_back(ArchiveEntry::utf8("config", model.config().to_text()));
  for (const auto& p : model.parameters()) a.entries.push_back(ArchiveEntry::tensor(p.name, p.var.value()));
  for (const auto& [name, t] : model.buffers()) a.entries.push_back(ArchiveEntry::tensor(name, *t));
  if (optimizer) {
    const std::uint64_t step = optimizer->step;
    a.entries.push_back(ArchiveEntry::words(
        "opt/step", {static_cast<std::uint32_t>(step & 0xFFFFFFFFu),
                     static_cast<std::uint32_t>(step >> 32)}));
    for (const auto& [name, mom] : optimizer->moments) {
      a.entries.push_back(ArchiveEntry::tensor("opt/m/" + name, mom.m));
      a.entries.push_back(ArchiveEntry::tensor("opt/v/" + name, mom.v));
    }
  }
  return a;
}

void save_checkpoint(const std::filesystem::path& path, Model<float>& model,
                     const LambState<float>* optimizer) {
  write_archive(path, make_checkpoint(model, optimizer));
}

void restore_model(Model<float>& model, const Archive& archive) {
  std::map<std::string, std::string> expected, found;
  std::map<std::string, Tensor<float>*> targets;
  for (auto& p : model.parameters()) {
    expected[p.name] = p.var.shape().str();
    targets[p.name] = &p.var.mutable_value();
  }
  for (auto& [name, t] : model.buffers()) {
    expected[name] = t->shape().str();
    targets[name] = t;
  }
  for (const auto& e : archive.entries) {
    if (e.name == "config" || e.name.rfind("opt/", 0) == 0) continue;
    found[e.name] = e.dtype == Dtype::F32 && e.dims.size() == 4
                        ? Shape{static_cast<int>(e.dims[0]), static_cast<int>(e.dims[1]),
                                static_cast<int>(e.dims[2]), static_cast<int>(e.dims[3])}
                              .str()
                        : dims_str(e.dims);
  }
  if (expected != found) {
    throw ConfigError("checkpoint does not match model config\nmodel expects:\n" +
                      shape_list(expected) + "checkpoint holds:\n" + shape_list(found));
  }
  for (const auto& e : archive.entries) {
    auto it = targets.find(e.name);
    if (it != targets.end()) *it->second = e.to_tensor();
  }
}

bool restore_optimizer(LambState<float>& state, const Archive& archive) {
  const ArchiveEntry* step = archive.find("opt/step");
  if (!step) return false;
  if (step->dtype != Dtype::U32 || step->u32.size() != 2) throw IoError("opt/step malformed");
  state.step = static_cast<std::uint64_t>(step->u32[0]) | (static_cast<std::uint64_t>(step->u32[1]) << 32);
  state.moments.clear();
  for (const auto& e : archive.entries) {
    if (e.name.rfind("opt/m/", 0) == 0) state.moments[e.name.substr(6)].m = e.to_tensor();
    else if (e.name.rfind("opt/v/", 0) == 0) state.moments[e.name.substr(6)].v = e.to_tensor();
  }
  return true;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const Archive a = read_archive(path);
  const ArchiveEntry* cfg = a.find("config");
  if (!cfg || cfg->dtype != Dtype::Utf8) throw IoError(path.string() + ": missing config entry");
  LoadedCheckpoint out{Model<float>(ModelConfig::from_text(cfg->text)), std::nullopt};
  restore_model(out.model, a);
  LambState<float> st;
  if (restore_optimizer(st, a)) out.optimizer = std::move(st);
  return out;
}

}  // namespace resseg
