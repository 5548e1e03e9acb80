#include "starvqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "starvqa/errors.hpp"

namespace starvqa {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'V', 'Q', 'A'};

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  template <typename U>
  U pod() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes.size() - pos) throw InputError("truncated checkpoint");
    const auto* p = bytes.data() + pos;
    pos += n;
    return p;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos == bytes.size(); }

 private:
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

}  // namespace

std::vector<std::uint8_t> CheckpointFile::encode() const {
  Writer w;
  w.raw(kMagic, 4);
  w.pod(kVersion);
  w.str(config_text);
  w.pod(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.pod(static_cast<std::uint8_t>(e.dtype));
    w.pod(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.pod(static_cast<std::uint64_t>(d));
    w.raw(e.bytes.data(), e.bytes.size());
  }
  return std::move(w.out);
}

CheckpointFile CheckpointFile::decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw InputError("not a SVQA checkpoint");
  Reader r(bytes.subspan(4));
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
  CheckpointFile file;
  file.config_text = r.str();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str();
    const auto tag = r.pod<std::uint8_t>();
    if (tag > 1) throw InputError("checkpoint entry '" + e.name + "' has unknown dtype " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    const auto rank = r.pod<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
    const std::size_t n = shape_size(e.shape) * dtype_size(e.dtype);
    const auto* p = r.take(n);
    e.bytes.assign(p, p + n);
    file.entries.push_back(std::move(e));
  }
  if (!r.done()) throw InputError("trailing bytes after checkpoint entries");
  return file;
}

void CheckpointFile::save(const std::filesystem::path& path) const {
  const auto bytes = encode();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError(path.string() + ": write failed");
}

CheckpointFile CheckpointFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

const CheckpointEntry* CheckpointFile::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
void CheckpointFile::put(std::string name, const Tensor<T>& t) {
  CheckpointEntry e{std::move(name), dtype_of<T>(), t.shape(), {}};
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
  e.bytes.assign(p, p + t.size() * sizeof(T));
  entries.push_back(std::move(e));
}

template <typename T>
Tensor<T> CheckpointFile::get(std::string_view name) const {
  const auto* e = find(name);
  if (!e) throw InputError("checkpoint has no entry '" + std::string(name) + "'");
  if (e->dtype != dtype_of<T>())
    throw InputError("checkpoint entry '" + std::string(name) + "' is " + (e->dtype == DType::f32 ? "f32" : "f64"));
  Tensor<T> t(e->shape);
  std::memcpy(t.data(), e->bytes.data(), e->bytes.size());
  return t;
}

template <typename T>
CheckpointFile to_file(const Checkpoint<T>& ckpt) {
  CheckpointFile file;
  file.config_text = ckpt.config.to_text();
  const auto& params = ckpt.model.params;
  for (std::size_t i = 0; i < params.size(); ++i) file.put("param/" + params.name(i), params[i]);
  const auto& m = ckpt.optimizer.first_moment();
  const auto& v = ckpt.optimizer.second_moment();
  for (std::size_t i = 0; i < m.size(); ++i) {
    file.put("adam/m/" + params.name(i), m[i]);
    file.put("adam/v/" + params.name(i), v[i]);
  }
  file.put("adam/step", Tensor<double>({1}, static_cast<double>(ckpt.optimizer.steps())));
  if (ckpt.model.decoder) {
    Tensor<double> d({kAnchors + 1});
    for (std::size_t k = 0; k < kAnchors; ++k) d[k] = ckpt.model.decoder->weights[k];
    d[kAnchors] = ckpt.model.decoder->intercept;
    file.put("decoder/linear", d);
  }
  file.put("meta/epoch", Tensor<double>({1}, static_cast<double>(ckpt.epoch)));
  file.put("meta/loss_history", Tensor<double>({ckpt.loss_history.size()}, ckpt.loss_history));
  return file;
}

template <typename T>
Checkpoint<T> from_file(const CheckpointFile& file) {
  Checkpoint<T> ckpt{RunConfig::parse(file.config_text), Model<T>::zeros(EncoderConfig{}), {}, 0, {}};
  ckpt.model = Model<T>::zeros(ckpt.config.encoder);
  auto& params = ckpt.model.params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto t = file.get<T>("param/" + params.name(i));
    if (t.shape() != params[i].shape())
      throw InputError("checkpoint parameter '" + params.name(i) + "' has shape " + to_string(t.shape()) +
                       ", expected " + to_string(params[i].shape()));
    params[i] = std::move(t);
  }
  ckpt.optimizer = Adam<T>(params, ckpt.config.train);
  if (file.find("adam/step")) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.optimizer.first_moment()[i] = file.get<T>("adam/m/" + params.name(i));
      ckpt.optimizer.second_moment()[i] = file.get<T>("adam/v/" + params.name(i));
    }
    ckpt.optimizer.set_steps(static_cast<std::uint64_t>(file.get<double>("adam/step")[0]));
  }
  if (file.find("decoder/linear")) {
    const auto d = file.get<double>("decoder/linear");
    if (d.size() != kAnchors + 1) throw InputError("checkpoint decoder has " + std::to_string(d.size()) + " values");
    LinearDecoder dec;
    for (std::size_t k = 0; k < kAnchors; ++k) dec.weights[k] = d[k];
    dec.intercept = d[kAnchors];
    ckpt.model.decoder = dec;
  }
  if (file.find("meta/epoch")) ckpt.epoch = static_cast<std::size_t>(file.get<double>("meta/epoch")[0]);
  if (file.find("meta/loss_history")) {
    const auto h = file.get<double>("meta/loss_history");
    ckpt.loss_history.assign(h.values().begin(), h.values().end());
  }
  return ckpt;
}

Precision stored_precision(const CheckpointFile& file) {
  for (const auto& e : file.entries)
    if (e.name.starts_with("param/")) return e.dtype == DType::f32 ? Precision::f32 : Precision::f64;
  throw InputError("checkpoint holds no parameters");
}

template void CheckpointFile::put<float>(std::string, const Tensor<float>&);
template void CheckpointFile::put<double>(std::string, const Tensor<double>&);
template Tensor<float> CheckpointFile::get<float>(std::string_view) const;
template Tensor<double> CheckpointFile::get<double>(std::string_view) const;
template CheckpointFile to_file<float>(const Checkpoint<float>&);
template CheckpointFile to_file<double>(const Checkpoint<double>&);
template Checkpoint<float> from_file<float>(const CheckpointFile&);
template Checkpoint<double> from_file<double>(const CheckpointFile&);

}  // namespace starvqa
