#include "deanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "deanet/error.hpp"

namespace deanet {
namespace {

constexpr char kMagic[4] = {'D', 'E', 'A', 'N'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw DataError(source_ + ": truncated checkpoint while reading " + what + " at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << "]";
  return os.str();
}

template <typename T>
CheckpointEntry make_entry(const std::string& name, const Shape& shape, std::span<const T> values) {
  CheckpointEntry e;
  e.name = name;
  for (int d : shape) e.dims.push_back(static_cast<std::uint32_t>(d));
  e.values.assign(values.begin(), values.end());
  return e;
}

}  // namespace

std::string encode_checkpoint(std::span<const CheckpointEntry> entries) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw DataError("checkpoint tensor name too long: " + e.name.substr(0, 64));
    if (e.dims.size() > 0xFF) throw DataError("checkpoint tensor rank too large: " + e.name);
    std::size_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.values.size())
      throw DataError("checkpoint tensor " + e.name + ": dims " + dims_string(e.dims) + " do not match " +
                      std::to_string(e.values.size()) + " values");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    out.push_back(static_cast<char>(e.dims.size()));
    for (auto d : e.dims) put_le<std::uint32_t>(out, d);
    for (float v : e.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader in(bytes, source);
  if (in.take(4, "magic") != std::string_view(kMagic, 4)) throw DataError(source + ": not a DEAN checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>("tensor count");
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto name_len = in.get<std::uint16_t>("name length");
    e.name = std::string(in.take(name_len, "name"));
    const auto rank = in.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) {
      e.dims.push_back(in.get<std::uint32_t>("dims"));
      n *= e.dims.back();
    }
    if (n > bytes.size()) throw DataError(source + ": tensor " + e.name + " claims more data than the file holds");
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) e.values[i] = std::bit_cast<float>(in.get<std::uint32_t>("tensor data"));
    entries.push_back(std::move(e));
  }
  if (!in.done()) throw DataError(source + ": trailing bytes after last tensor");
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, std::span<const CheckpointEntry> entries) {
  const std::string bytes = encode_checkpoint(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

const CheckpointEntry* find_entry(std::span<const CheckpointEntry> entries, std::string_view name) {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
std::vector<CheckpointEntry> export_parameters(const Module<T>& module) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : module.named_parameters()) out.push_back(make_entry<T>(p.name, p.tensor.shape(), p.tensor.data()));
  return out;
}

template <typename T>
void import_parameters(Module<T>& module, std::span<const CheckpointEntry> entries, const std::string& source) {
  for (const auto& e : entries) {
    if (e.name.starts_with("adam.") || e.name.starts_with("train.")) continue;
    bool known = false;
    for (const auto& p : module.named_parameters()) known = known || p.name == e.name;
    if (!known) throw DataError(source + ": unexpected tensor '" + e.name + "' (network config mismatch?)");
  }
  for (const auto& p : module.named_parameters()) {
    const CheckpointEntry* e = find_entry(entries, p.name);
    if (!e) throw DataError(source + ": missing tensor '" + p.name + "' (network config mismatch?)");
    std::vector<std::uint32_t> expected;
    for (int d : p.tensor.shape()) expected.push_back(static_cast<std::uint32_t>(d));
    if (e->dims != expected)
      throw DataError(source + ": tensor '" + p.name + "' has shape " + dims_string(e->dims) +
                      " but the configured network expects " + dims_string(expected));
  }
  for (const auto& p : module.named_parameters()) {
    const CheckpointEntry* e = find_entry(entries, p.name);
    Tensor<T> t = p.tensor;
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(e->values[i]);
  }
}

template <typename T>
std::vector<CheckpointEntry> export_adam_state(const Module<T>& module, const AdamState<T>& state) {
  std::vector<CheckpointEntry> out;
  const auto& params = module.named_parameters();
  if (state.first_moment.empty()) return out;
  const float step = static_cast<float>(state.step_count);
  out.push_back({"adam.step", {1}, {step}});
  for (std::size_t k = 0; k < params.size(); ++k) {
    out.push_back(make_entry<T>("adam.m." + params[k].name, params[k].tensor.shape(), state.first_moment[k]));
    out.push_back(make_entry<T>("adam.v." + params[k].name, params[k].tensor.shape(), state.second_moment[k]));
  }
  return out;
}

template <typename T>
bool import_adam_state(const Module<T>& module, std::span<const CheckpointEntry> entries, AdamState<T>& state) {
  const CheckpointEntry* step = find_entry(entries, "adam.step");
  if (!step) return false;
  state.step_count = static_cast<std::int64_t>(step->values.at(0));
  state.first_moment.clear();
  state.second_moment.clear();
  for (const auto& p : module.named_parameters()) {
    const CheckpointEntry* m = find_entry(entries, "adam.m." + p.name);
    const CheckpointEntry* v = find_entry(entries, "adam.v." + p.name);
    if (!m || !v || m->values.size() != p.tensor.numel() || v->values.size() != p.tensor.numel())
      throw DataError("checkpoint optimizer state missing or mismatched for '" + p.name + "'");
    state.first_moment.emplace_back(m->values.begin(), m->values.end());
    state.second_moment.emplace_back(v->values.begin(), v->values.end());
  }
  return true;
}

template <typename T>
void save_module(const std::filesystem::path& path, const Module<T>& module, const AdamState<T>* adam) {
  auto entries = export_parameters(module);
  if (adam) {
    auto extra = export_adam_state(module, *adam);
    entries.insert(entries.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  }
  write_checkpoint(path, entries);
}

template <typename T>
void load_module(const std::filesystem::path& path, Module<T>& module, AdamState<T>* adam) {
  const auto entries = read_checkpoint(path);
  import_parameters(module, entries, path.string());
  if (adam) import_adam_state(module, entries, *adam);
}

#define DEANET_INSTANTIATE_CKPT(T)                                                                         \
  template std::vector<CheckpointEntry> export_parameters(const Module<T>&);                                \
  template void import_parameters(Module<T>&, std::span<const CheckpointEntry>, const std::string&);        \
  template std::vector<CheckpointEntry> export_adam_state(const Module<T>&, const AdamState<T>&);           \
  template bool import_adam_state(const Module<T>&, std::span<const CheckpointEntry>, AdamState<T>&);       \
  template void save_module(const std::filesystem::path&, const Module<T>&, const AdamState<T>*);           \
  template void load_module(const std::filesystem::path&, Module<T>&, AdamState<T>*);

DEANET_INSTANTIATE_CKPT(float)
DEANET_INSTANTIATE_CKPT(double)

}  // namespace deanet
