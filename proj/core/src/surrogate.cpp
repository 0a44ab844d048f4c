#include "mpmflow/surrogate.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace mpmflow {

namespace {

std::int32_t narrow(std::int32_t lc, std::int32_t div) {
  return lc / div > 0 ? lc / div : 1;
}

}  // namespace

SurrogateModel::SurrogateModel(const SurrogateHyper& hyper_,
                               std::uint64_t seed)
    : hyper(hyper_),
      enc1(hyper_.in_channels, narrow(hyper_.latent_channels, 2), 3, 2, 1),
      enc2(narrow(hyper_.latent_channels, 2), hyper_.latent_channels, 3, 2,
           1),
      enc3(hyper_.latent_channels, hyper_.latent_channels, 3, 1, 1),
      lstm(hyper_.latent_channels, 3),
      head(hyper_.latent_channels, hyper_.latent_channels, 3, 1, 1),
      dec1(hyper_.latent_channels, narrow(hyper_.latent_channels, 2), 4, 2,
           1),
      dec2(narrow(hyper_.latent_channels, 2),
           narrow(hyper_.latent_channels, 4), 4, 2, 1),
      dec3(narrow(hyper_.latent_channels, 4),
           narrow(hyper_.latent_channels, 4), 3, 1, 1),
      dec4(narrow(hyper_.latent_channels, 4), hyper_.in_channels, 3, 1, 1) {
  MPMFLOW_CHECK(hyper.in_channels > 0 && hyper.latent_channels > 0 &&
                    hyper.window >= 2,
                "bad surrogate hyperparameters");
  Pcg32 rng(seed, 7);
  enc1.init(rng);
  enc2.init(rng);
  enc3.init(rng);
  lstm.init(rng);
  head.init(rng);
  dec1.init(rng);
  dec2.init(rng);
  dec3.init(rng);
  dec4.init(rng);
}

Tensor4 SurrogateModel::encode(const Tensor4& x) const {
  EncodeCache cache;
  return encode_cached(x, cache);
}

Tensor4 SurrogateModel::encode_cached(const Tensor4& x,
                                      EncodeCache& cache) const {
  MPMFLOW_CHECK(x.shape[0] == hyper.in_channels,
                "encode input channel mismatch");
  for (int a = 1; a < 4; ++a)
    MPMFLOW_CHECK(x.shape[a] >= 12 && x.shape[a] % 4 == 0,
                  "encode spatial dims must be multiples of 4, at least 12");
  cache.x = x;
  cache.z1 = enc1.forward(x);
  Tensor4 a1 = leaky_relu(cache.z1, hyper.slope);
  cache.z2 = enc2.forward(a1);
  Tensor4 a2 = leaky_relu(cache.z2, hyper.slope);
  cache.z3 = enc3.forward(a2);
  return leaky_relu(cache.z3, hyper.slope);
}

Tensor4 SurrogateModel::encode_backward(const EncodeCache& cache,
                                        const Tensor4& gc) {
  Tensor4 gz3 = leaky_relu_backward(cache.z3, gc, hyper.slope);
  Tensor4 ga2 = enc3.backward(leaky_relu(cache.z2, hyper.slope), gz3);
  Tensor4 gz2 = leaky_relu_backward(cache.z2, ga2, hyper.slope);
  Tensor4 ga1 = enc2.backward(leaky_relu(cache.z1, hyper.slope), gz2);
  Tensor4 gz1 = leaky_relu_backward(cache.z1, ga1, hyper.slope);
  return enc1.backward(cache.x, gz1);
}

Tensor4 SurrogateModel::decode(const Tensor4& c) const {
  DecodeCache cache;
  return decode_cached(c, cache);
}

Tensor4 SurrogateModel::decode_cached(const Tensor4& c,
                                      DecodeCache& cache) const {
  MPMFLOW_CHECK(c.shape[0] == hyper.latent_channels,
                "decode latent channel mismatch");
  cache.c = c;
  cache.z1 = dec1.forward(c);
  cache.a1 = leaky_relu(cache.z1, hyper.slope);
  cache.z2 = dec2.forward(cache.a1);
  cache.a2 = leaky_relu(cache.z2, hyper.slope);
  cache.z3 = dec3.forward(cache.a2);
  cache.a3 = leaky_relu(cache.z3, hyper.slope);
  return dec4.forward(cache.a3);
}

Tensor4 SurrogateModel::decode_backward(const DecodeCache& cache,
                                        const Tensor4& gy) {
  Tensor4 ga3 = dec4.backward(cache.a3, gy);
  Tensor4 gz3 = leaky_relu_backward(cache.z3, ga3, hyper.slope);
  Tensor4 ga2 = dec3.backward(cache.a2, gz3);
  Tensor4 gz2 = leaky_relu_backward(cache.z2, ga2, hyper.slope);
  Tensor4 ga1 = dec2.backward(cache.a1, gz2);
  Tensor4 gz1 = leaky_relu_backward(cache.z1, ga1, hyper.slope);
  return dec1.backward(cache.c, gz1);
}

Tensor4 SurrogateModel::predict_next(
    const std::vector<Tensor4>& latents) const {
  PredictCache cache;
  return predict_cached(latents, cache);
}

Tensor4 SurrogateModel::predict_cached(const std::vector<Tensor4>& latents,
                                       PredictCache& cache) const {
  MPMFLOW_CHECK(static_cast<std::int32_t>(latents.size()) == hyper.window,
                "window length does not match the model");
  for (const Tensor4& c : latents)
    MPMFLOW_CHECK(c.shape[0] == hyper.latent_channels &&
                      c.same_shape(latents.front()),
                  "latent shape mismatch in window");
  const Tensor4& c0 = latents.front();
  Tensor4 h(c0.shape[0], c0.shape[1], c0.shape[2], c0.shape[3]);
  Tensor4 c = h;
  cache.steps.resize(latents.size());
  for (std::size_t t = 0; t < latents.size(); ++t)
    lstm.forward(latents[t], h, c, &cache.steps[t]);
  cache.h_final = h;
  return head.forward(h);
}

std::vector<Tensor4> SurrogateModel::predict_backward(
    const PredictCache& cache, const Tensor4& gc_hat) {
  Tensor4 gh = head.backward(cache.h_final, gc_hat);
  const Tensor4& shape_ref = cache.h_final;
  Tensor4 gc(shape_ref.shape[0], shape_ref.shape[1], shape_ref.shape[2],
             shape_ref.shape[3]);
  std::vector<Tensor4> gx(cache.steps.size());
  for (std::size_t t = cache.steps.size(); t-- > 0;)
    gx[t] = lstm.backward(cache.steps[t], gh, gc);
  return gx;
}

std::vector<ParamRef> SurrogateModel::params() {
  std::vector<ParamRef> out;
  auto add = [&](std::vector<ParamRef> refs) {
    for (ParamRef& p : refs) out.push_back(std::move(p));
  };
  add(enc1.params("enc1"));
  add(enc2.params("enc2"));
  add(enc3.params("enc3"));
  add(lstm.params("lstm"));
  add(head.params("head"));
  add(dec1.params("dec1"));
  add(dec2.params("dec2"));
  add(dec3.params("dec3"));
  add(dec4.params("dec4"));
  return out;
}

std::int64_t SurrogateModel::param_count() {
  std::int64_t n = 0;
  for (const ParamRef& p : params())
    n += static_cast<std::int64_t>(p.value->size());
  return n;
}

void SurrogateModel::zero_grads() {
  for (Conv3d* c : {&enc1, &enc2, &enc3, &head, &dec3, &dec4})
    c->zero_grads();
  lstm.zero_grads();
  dec1.zero_grads();
  dec2.zero_grads();
}

namespace {

constexpr char kMagic[4] = {'M', 'P', 'M', 'W'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) {
  MPMFLOW_CHECK(std::fwrite(&v, sizeof v, 1, f) == 1, "checkpoint write failed");
}

void put_f32(std::FILE* f, float v) {
  MPMFLOW_CHECK(std::fwrite(&v, sizeof v, 1, f) == 1, "checkpoint write failed");
}

std::uint32_t get_u32(std::FILE* f) {
  std::uint32_t v = 0;
  if (std::fread(&v, sizeof v, 1, f) != 1)
    throw FormatError("truncated checkpoint");
  return v;
}

float get_f32(std::FILE* f) {
  float v = 0;
  if (std::fread(&v, sizeof v, 1, f) != 1)
    throw FormatError("truncated checkpoint");
  return v;
}

}  // namespace

void save_model(const std::string& path, SurrogateModel& model) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  MPMFLOW_CHECK(f != nullptr, "cannot open checkpoint for writing: " + path);
  MPMFLOW_CHECK(std::fwrite(kMagic, 1, 4, f.get()) == 4,
                "checkpoint write failed");
  put_u32(f.get(), kVersion);
  put_u32(f.get(), static_cast<std::uint32_t>(model.hyper.in_channels));
  put_u32(f.get(), static_cast<std::uint32_t>(model.hyper.latent_channels));
  put_u32(f.get(), static_cast<std::uint32_t>(model.hyper.window));
  put_f32(f.get(), model.hyper.slope);

  std::vector<ParamRef> refs = model.params();
  put_u32(f.get(), static_cast<std::uint32_t>(refs.size()));
  std::uint64_t offset = 0;
  for (const ParamRef& p : refs) {
    put_u32(f.get(), static_cast<std::uint32_t>(p.name.size()));
    MPMFLOW_CHECK(
        std::fwrite(p.name.data(), 1, p.name.size(), f.get()) ==
            p.name.size(),
        "checkpoint write failed");
    put_u32(f.get(), static_cast<std::uint32_t>(p.shape.size()));
    for (std::int32_t d : p.shape)
      put_u32(f.get(), static_cast<std::uint32_t>(d));
    MPMFLOW_CHECK(std::fwrite(&offset, sizeof offset, 1, f.get()) == 1,
                  "checkpoint write failed");
    offset += p.value->size();
  }
  for (const ParamRef& p : refs)
    MPMFLOW_CHECK(std::fwrite(p.value->data(), sizeof(float),
                              p.value->size(),
                              f.get()) == p.value->size(),
                  "checkpoint write failed");
}

SurrogateModel load_model(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  MPMFLOW_CHECK(f != nullptr, "cannot open checkpoint: " + path);
  char magic[4] = {};
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a model checkpoint: " + path);
  const std::uint32_t version = get_u32(f.get());
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version");

  SurrogateHyper hyper;
  hyper.in_channels = static_cast<std::int32_t>(get_u32(f.get()));
  hyper.latent_channels = static_cast<std::int32_t>(get_u32(f.get()));
  hyper.window = static_cast<std::int32_t>(get_u32(f.get()));
  hyper.slope = get_f32(f.get());
  SurrogateModel model(hyper);

  struct Entry {
    std::string name;
    std::vector<std::int32_t> shape;
    std::uint64_t offset;
  };
  const std::uint32_t count = get_u32(f.get());
  std::vector<Entry> entries(count);
  for (Entry& e : entries) {
    const std::uint32_t len = get_u32(f.get());
    if (len > 256) throw FormatError("implausible checkpoint entry name");
    e.name.resize(len);
    if (std::fread(e.name.data(), 1, len, f.get()) != len)
      throw FormatError("truncated checkpoint");
    const std::uint32_t ndim = get_u32(f.get());
    if (ndim > 5) throw FormatError("implausible checkpoint entry rank");
    e.shape.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d)
      e.shape[d] = static_cast<std::int32_t>(get_u32(f.get()));
    if (std::fread(&e.offset, sizeof e.offset, 1, f.get()) != 1)
      throw FormatError("truncated checkpoint");
  }

  std::vector<ParamRef> refs = model.params();
  if (refs.size() != entries.size())
    throw FormatError("checkpoint layout does not match the model");
  const long blob_start = std::ftell(f.get());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Entry& e = entries[i];
    if (e.name != refs[i].name || e.shape != refs[i].shape)
      throw FormatError("checkpoint entry mismatch at " + e.name);
    if (std::fseek(f.get(),
                   blob_start +
                       static_cast<long>(e.offset * sizeof(float)),
                   SEEK_SET) != 0)
      throw FormatError("truncated checkpoint");
    if (std::fread(refs[i].value->data(), sizeof(float),
                   refs[i].value->size(),
                   f.get()) != refs[i].value->size())
      throw FormatError("truncated checkpoint");
  }
  return model;
}

}  // namespace mpmflow
