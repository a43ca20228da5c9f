#include "htn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace htn {

namespace {

std::size_t product_of_dims(const std::vector<Leg>& legs) {
  std::size_t n = 1;
  for (const auto& leg : legs) {
    if (leg.dim == 0) throw Error(ErrorKind::argument, "leg '" + leg.label + "' has dim 0");
    n *= leg.dim;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<Leg> legs) : legs_(std::move(legs)) {
  data_.assign(product_of_dims(legs_), cx(0.0, 0.0));
  check_invariants();
}

Tensor::Tensor(std::vector<Leg> legs, std::vector<cx> data)
    : legs_(std::move(legs)), data_(std::move(data)) {
  if (product_of_dims(legs_) != data_.size())
    throw Error(ErrorKind::argument, "data length does not match product of leg dims");
  check_invariants();
}

Tensor Tensor::scalar(cx value) { return Tensor({}, {value}); }

void Tensor::check_invariants() const {
  std::set<std::string_view> seen;
  for (const auto& leg : legs_) {
    if (!seen.insert(leg.label).second)
      throw Error(ErrorKind::argument, "duplicate leg label '" + leg.label + "'");
  }
  // one pass; a NaN or Inf anywhere poisons the accumulated norm
  if (!std::isfinite(norm()))
    throw Error(ErrorKind::integrity, "tensor contains a non-finite amplitude");
}

bool Tensor::has_leg(std::string_view label) const {
  for (const auto& leg : legs_)
    if (leg.label == label) return true;
  return false;
}

std::size_t Tensor::leg_position(std::string_view label) const {
  for (std::size_t i = 0; i < legs_.size(); ++i)
    if (legs_[i].label == label) return i;
  throw Error(ErrorKind::argument, "no leg named '" + std::string(label) + "'");
}

std::size_t Tensor::dim_of(std::string_view label) const { return legs_[leg_position(label)].dim; }

std::vector<std::size_t> Tensor::strides() const {
  std::vector<std::size_t> s(legs_.size(), 1);
  for (std::size_t i = legs_.size(); i-- > 1;) s[i - 1] = s[i] * legs_[i].dim;
  return s;
}

cx& Tensor::at(std::span<const std::size_t> indices) {
  if (indices.size() != legs_.size())
    throw Error(ErrorKind::argument, "index rank mismatch");
  std::size_t flat = 0;
  auto s = strides();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= legs_[i].dim) throw Error(ErrorKind::argument, "index out of range");
    flat += indices[i] * s[i];
  }
  norm_cache_.reset();
  return data_[flat];
}

cx Tensor::at(std::span<const std::size_t> indices) const {
  if (indices.size() != legs_.size())
    throw Error(ErrorKind::argument, "index rank mismatch");
  std::size_t flat = 0;
  auto s = strides();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= legs_[i].dim) throw Error(ErrorKind::argument, "index out of range");
    flat += indices[i] * s[i];
  }
  return data_[flat];
}

cx Tensor::scalar_value() const {
  if (!legs_.empty()) throw Error(ErrorKind::argument, "tensor is not rank 0");
  return data_[0];
}

Tensor Tensor::conjugate() const {
  std::vector<cx> out(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = std::conj(data_[i]);
  return Tensor(legs_, std::move(out));
}

Tensor Tensor::permuted(std::span<const std::size_t> order) const {
  if (order.size() != legs_.size())
    throw Error(ErrorKind::argument, "permutation rank mismatch");
  std::vector<bool> used(legs_.size(), false);
  std::vector<Leg> new_legs(legs_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= legs_.size() || used[order[i]])
      throw Error(ErrorKind::argument, "invalid permutation");
    used[order[i]] = true;
    new_legs[i] = legs_[order[i]];
  }
  std::vector<cx> out(data_.size());
  const auto in_strides = strides();
  // Walk output indices with an odometer; accumulate the input flat index.
  const std::size_t r = legs_.size();
  std::vector<std::size_t> idx(r, 0);
  std::vector<std::size_t> dim(r), stride_in(r);
  for (std::size_t i = 0; i < r; ++i) {
    dim[i] = new_legs[i].dim;
    stride_in[i] = in_strides[order[i]];
  }
  std::size_t in_flat = 0;
  for (std::size_t out_flat = 0; out_flat < out.size(); ++out_flat) {
    out[out_flat] = data_[in_flat];
    for (std::size_t i = r; i-- > 0;) {
      in_flat += stride_in[i];
      if (++idx[i] < dim[i]) break;
      in_flat -= dim[i] * stride_in[i];
      idx[i] = 0;
    }
  }
  return Tensor(std::move(new_legs), std::move(out));
}

Tensor Tensor::permuted(std::initializer_list<std::size_t> order) const {
  std::vector<std::size_t> v(order);
  return permuted(std::span<const std::size_t>(v));
}

Tensor Tensor::relabeled(const std::vector<std::pair<std::string, std::string>>& renames) const {
  std::vector<Leg> new_legs = legs_;
  for (const auto& [from, to] : renames) {
    new_legs[leg_position(from)].label = to;
  }
  return Tensor(std::move(new_legs), data_);
}

double Tensor::norm() const {
  if (!norm_cache_) {
    double s = 0.0;
    for (const cx& v : data_) s += std::norm(v);
    norm_cache_ = std::sqrt(s);
  }
  return *norm_cache_;
}

Eigen::Map<const Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
Tensor::matrix_view(std::size_t row_legs) const {
  if (row_legs > legs_.size()) throw Error(ErrorKind::argument, "row_legs exceeds rank");
  std::size_t rows = 1, cols = 1;
  for (std::size_t i = 0; i < legs_.size(); ++i) (i < row_legs ? rows : cols) *= legs_[i].dim;
  return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Matrix Tensor::to_matrix(std::size_t row_legs) const { return matrix_view(row_legs); }

Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<std::size_t> a_paired, b_paired;
  a_paired.reserve(pairs.size());
  b_paired.reserve(pairs.size());
  for (const auto& [la, lb] : pairs) {
    std::size_t pa = a.leg_position(la);
    std::size_t pb = b.leg_position(lb);
    if (std::find(a_paired.begin(), a_paired.end(), pa) != a_paired.end() ||
        std::find(b_paired.begin(), b_paired.end(), pb) != b_paired.end())
      throw Error(ErrorKind::argument, "leg paired twice in contraction");
    if (a.legs()[pa].dim != b.legs()[pb].dim)
      throw Error(ErrorKind::contraction, "dimension mismatch on legs '" + la + "'/'" + lb + "'");
    a_paired.push_back(pa);
    b_paired.push_back(pb);
  }

  std::vector<std::size_t> a_order, b_order;
  std::vector<Leg> out_legs;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (std::find(a_paired.begin(), a_paired.end(), i) == a_paired.end()) {
      a_order.push_back(i);
      out_legs.push_back(a.legs()[i]);
    }
  a_order.insert(a_order.end(), a_paired.begin(), a_paired.end());
  b_order = b_paired;
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (std::find(b_paired.begin(), b_paired.end(), i) == b_paired.end()) {
      b_order.push_back(i);
      out_legs.push_back(b.legs()[i]);
    }

  {
    std::set<std::string_view> seen;
    for (const auto& leg : out_legs)
      if (!seen.insert(leg.label).second)
        throw Error(ErrorKind::argument,
                    "contraction result would carry duplicate leg '" + leg.label + "'");
  }

  Tensor ap = a.permuted(a_order);
  Tensor bp = b.permuted(b_order);
  const std::size_t free_a = a.rank() - pairs.size();
  auto am = ap.matrix_view(free_a);         // (free_a x K)
  auto bm = bp.matrix_view(pairs.size());   // (K x free_b)

  Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = am * bm;
  std::vector<cx> out(rm.data(), rm.data() + rm.size());
  return Tensor(std::move(out_legs), std::move(out));
}

Tensor regroup(const Tensor& t, const LegGrouping& grouping) {
  std::vector<std::size_t> order;
  std::vector<Leg> out_legs;
  std::size_t covered = 0;
  std::set<std::size_t> seen;
  for (const auto& group : grouping.groups) {
    std::size_t dim = 1;
    for (const auto& member : group.members) {
      std::size_t pos = t.leg_position(member);
      if (!seen.insert(pos).second)
        throw Error(ErrorKind::argument, "leg '" + member + "' appears in two groups");
      order.push_back(pos);
      dim *= t.legs()[pos].dim;
      ++covered;
    }
    out_legs.push_back({group.label, dim});
  }
  if (covered != t.rank())
    throw Error(ErrorKind::argument, "grouping does not cover all legs");
  Tensor p = t.permuted(order);
  return Tensor(std::move(out_legs), std::vector<cx>(p.data().begin(), p.data().end()));
}

Tensor split_leg(const Tensor& t, std::string_view label, const std::vector<Leg>& parts) {
  std::size_t pos = t.leg_position(label);
  std::size_t dim = 1;
  for (const auto& part : parts) dim *= part.dim;
  if (dim != t.legs()[pos].dim)
    throw Error(ErrorKind::argument, "split parts do not multiply to the composite dim");
  std::vector<Leg> out_legs;
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i == pos)
      out_legs.insert(out_legs.end(), parts.begin(), parts.end());
    else
      out_legs.push_back(t.legs()[i]);
  }
  return Tensor(std::move(out_legs), std::vector<cx>(t.data().begin(), t.data().end()));
}

Tensor partial_trace(const Tensor& t,
                     const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<std::size_t> first, second;
  std::set<std::size_t> paired;
  for (const auto& [l1, l2] : pairs) {
    std::size_t p1 = t.leg_position(l1), p2 = t.leg_position(l2);
    if (p1 == p2 || !paired.insert(p1).second || !paired.insert(p2).second)
      throw Error(ErrorKind::argument, "partial_trace pairs must be disjoint");
    if (t.legs()[p1].dim != t.legs()[p2].dim)
      throw Error(ErrorKind::contraction, "partial_trace dimension mismatch");
    first.push_back(p1);
    second.push_back(p2);
  }
  std::vector<std::size_t> order;
  std::vector<Leg> out_legs;
  for (std::size_t i = 0; i < t.rank(); ++i)
    if (!paired.count(i)) {
      order.push_back(i);
      out_legs.push_back(t.legs()[i]);
    }
  std::size_t free_rank = order.size();
  order.insert(order.end(), first.begin(), first.end());
  order.insert(order.end(), second.begin(), second.end());
  Tensor p = t.permuted(order);

  std::size_t free_size = 1;
  for (const auto& leg : out_legs) free_size *= leg.dim;
  std::size_t diag = 1;
  for (std::size_t i = 0; i < first.size(); ++i) diag *= t.legs()[first[i]].dim;

  std::vector<cx> out(free_size, cx(0, 0));
  std::span<const cx> src = p.data();
  for (std::size_t f = 0; f < free_size; ++f) {
    const cx* base = src.data() + f * diag * diag;
    cx acc(0, 0);
    for (std::size_t d = 0; d < diag; ++d) acc += base[d * diag + d];
    out[f] = acc;
  }
  (void)free_rank;
  return Tensor(std::move(out_legs), std::move(out));
}

Tensor reshuffle(const Tensor& u) {
  if (u.rank() != 4) throw Error(ErrorKind::argument, "reshuffle expects a 4-leg tensor");
  std::size_t d = u.legs()[0].dim;
  for (const auto& leg : u.legs())
    if (leg.dim != d) throw Error(ErrorKind::argument, "reshuffle expects equal leg dims");
  return u.permuted({0, 2, 1, 3});
}

Tensor identity_tensor(std::string row, std::string col, std::size_t dim) {
  Tensor t({{std::move(row), dim}, {std::move(col), dim}});
  for (std::size_t i = 0; i < dim; ++i) t[i * dim + i] = cx(1, 0);
  return t;
}

Tensor tensor_from_matrix(const Matrix& m, Leg row, Leg col) {
  if (static_cast<std::size_t>(m.rows()) != row.dim ||
      static_cast<std::size_t>(m.cols()) != col.dim)
    throw Error(ErrorKind::argument, "matrix shape does not match legs");
  std::vector<cx> data(row.dim * col.dim);
  for (std::size_t r = 0; r < row.dim; ++r)
    for (std::size_t c = 0; c < col.dim; ++c) data[r * col.dim + c] = m(r, c);
  return Tensor({std::move(row), std::move(col)}, std::move(data));
}

Tensor apply_matrix_to_leg(const Tensor& t, std::string_view label, const Matrix& m) {
  std::size_t pos = t.leg_position(label);
  std::size_t d = t.legs()[pos].dim;
  if (static_cast<std::size_t>(m.rows()) != d || static_cast<std::size_t>(m.cols()) != d)
    throw Error(ErrorKind::argument, "matrix does not match leg dim");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < pos; ++i) outer *= t.legs()[i].dim;
  for (std::size_t i = pos + 1; i < t.rank(); ++i) inner *= t.legs()[i].dim;

  using RowMat = Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (inner >= 64) {
    // data viewed per outer block as a contiguous (d x inner) row-major matrix
    Tensor out(t.legs());
    std::span<const cx> src = t.data();
    std::span<cx> dst = out.mutable_data();
    for (std::size_t o = 0; o < outer; ++o) {
      Eigen::Map<const RowMat> in(src.data() + o * d * inner, d, inner);
      Eigen::Map<RowMat> ob(dst.data() + o * d * inner, d, inner);
      ob.noalias() = m * in;
    }
    return out;
  }
  // small inner stride: bring the leg to the front and use one large product
  std::vector<std::size_t> order;
  order.push_back(pos);
  for (std::size_t i = 0; i < t.rank(); ++i)
    if (i != pos) order.push_back(i);
  Tensor p = t.permuted(order);
  auto view = p.matrix_view(1);  // d x rest
  RowMat rm = m * view;
  Tensor applied(p.legs(), std::vector<cx>(rm.data(), rm.data() + rm.size()));
  std::vector<std::size_t> back(t.rank());
  for (std::size_t i = 0; i < t.rank(); ++i) back[order[i]] = i;
  return applied.permuted(back);
}

double relative_distance(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.size() != b.size())
    throw Error(ErrorKind::argument, "relative_distance shape mismatch");
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (a.legs()[i].dim != b.legs()[i].dim)
      throw Error(ErrorKind::argument, "relative_distance dim mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::norm(a[i] - b[i]);
  double scale = std::max({a.norm(), b.norm(), 1e-300});
  return std::sqrt(diff) / scale;
}

namespace {
constexpr char kMagic[4] = {'H', 'T', 'N', 'T'};
}

void write_tensor(const std::string& path, const Tensor& t) {
  nlohmann::json header;
  header["scalar"] = "complex128";
  header["byte_order"] = "little";
  header["legs"] = nlohmann::json::array();
  for (const auto& leg : t.legs()) header["legs"].push_back({{"label", leg.label}, {"dim", leg.dim}});
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  std::uint32_t version = 1, hlen = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), hs.size());
  std::vector<double> payload(2 * t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    payload[2 * i] = t[i].real();
    payload[2 * i + 1] = t[i].imag();
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  char magic[4];
  std::uint32_t version = 0, hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != 1)
    throw Error(ErrorKind::io, "bad tensor file header in '" + path + "'");
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(hs);
  std::vector<Leg> legs;
  for (const auto& j : header.at("legs"))
    legs.push_back({j.at("label").get<std::string>(), j.at("dim").get<std::size_t>()});
  std::size_t n = 1;
  for (const auto& leg : legs) n *= leg.dim;
  std::vector<double> payload(2 * n);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::io, "truncated tensor payload in '" + path + "'");
  std::vector<cx> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = cx(payload[2 * i], payload[2 * i + 1]);
  return Tensor(std::move(legs), std::move(data));
}

}  // namespace htn
