// Model file layout. All integers are little-endian u32 unless noted, all
// reals little-endian IEEE-754 f64. "array" is a u32 element count followed
// by the elements; a matrix is rows, cols, element count, row-major data; a
// tensor is an extents array followed by an f64 array in storage order.
//
//   magic          8 bytes "FBTTRv01"
//   input_shape    u32 array (I_2..I_N)
//   responses      u32 M
//   x_mean, x_std, y_mean, y_std     f64 arrays (empty: no normalisation)
//   trace_retained u8
//   trace          u32 count, then count x (f64 ||E||, f64 ||F||)
//   block count    u32
//   per block      core tensor, score_core tensor, u32 factor count,
//                  factor matrices, q matrix, d f64 array, f64 scale,
//                  t matrix (0 x 0 when absent)
//   w, z           matrices

#include <fstream>
#include <iterator>

#include "fbttr/binary.hpp"
#include "fbttr/bttr.hpp"

namespace fbttr {

namespace {

constexpr std::string_view kMagic = "FBTTRv01";

}  // namespace

std::vector<unsigned char> serialize_model(const BttrModel& model) {
  binary::Writer w;
  w.bytes(kMagic);
  w.extents(model.input_shape);
  w.count(model.responses());
  w.vector(model.normalization.x_mean);
  w.vector(model.normalization.x_std);
  w.vector(model.normalization.y_mean);
  w.vector(model.normalization.y_std);
  w.u8(model.trace_retained ? 1 : 0);
  w.count(model.trace.size());
  for (const auto& [e, f] : model.trace) {
    w.f64(e);
    w.f64(f);
  }
  w.count(model.blocks.size());
  for (const Block& b : model.blocks) {
    w.tensor(b.core);
    w.tensor(b.score_core);
    w.count(b.factors.size());
    for (const auto& p : b.factors) w.matrix(p);
    w.matrix(b.q);
    w.vector(b.d);
    w.f64(b.scale);
    w.matrix(b.t);
  }
  w.matrix(model.w);
  w.matrix(model.z);
  return w.take();
}

BttrModel deserialize_model(std::span<const unsigned char> bytes) {
  binary::Reader<DataError> r(bytes);
  if (r.bytes(kMagic.size()) != kMagic) throw DataError("not an FBTTRv01 model file");
  BttrModel model;
  model.input_shape = r.extents();
  const std::size_t responses = r.count();
  model.normalization.x_mean = r.vector();
  model.normalization.x_std = r.vector();
  model.normalization.y_mean = r.vector();
  model.normalization.y_std = r.vector();
  model.trace_retained = r.u8() != 0;
  const std::size_t trace = r.count();
  for (std::size_t i = 0; i < trace; ++i) {
    const double e = r.f64();
    model.trace.emplace_back(e, r.f64());
  }
  const std::size_t blocks = r.count();
  for (std::size_t k = 0; k < blocks; ++k) {
    Block b;
    b.core = r.tensor();
    b.score_core = r.tensor();
    const std::size_t factors = r.count();
    for (std::size_t n = 0; n < factors; ++n) b.factors.push_back(r.matrix());
    b.q = r.matrix();
    b.d = r.vector();
    b.scale = r.f64();
    b.t = r.matrix();
    model.blocks.push_back(std::move(b));
  }
  model.w = r.matrix();
  model.z = r.matrix();
  if (!r.done()) throw DataError("trailing bytes after model");
  if (static_cast<std::size_t>(model.z.cols()) != responses ||
      static_cast<std::size_t>(model.w.cols()) != model.blocks.size() ||
      static_cast<std::size_t>(model.w.rows()) != product(model.input_shape)) {
    throw DataError("model file is internally inconsistent");
  }
  return model;
}

void save_model(const BttrModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path);
}

BttrModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace fbttr
