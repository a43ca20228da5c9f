#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace htn {

using cx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

enum class ErrorKind {
  argument,     // bad inputs (shape, labels, config)
  contraction,  // incompatible legs in a contraction
  convergence,  // iterative scheme failed to reach tolerance
  integrity,    // a structural identity the construction guarantees broke
  size,         // memory / problem-size guard tripped
  search,       // a bounded search exhausted its budget
  io,           // serialization
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct Leg {
  std::string label;
  std::size_t dim = 0;
};

/// Dense complex tensor with labeled legs.
///
/// Data is stored row-major over the leg order; the first leg is the most
/// significant index. All operations are pure: they return new tensors and
/// never mutate their inputs, so values are safe to share across threads.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor with the given legs.
  explicit Tensor(std::vector<Leg> legs);

  /// Tensor with explicit amplitudes (row-major over `legs`).
  Tensor(std::vector<Leg> legs, std::vector<cx> data);

  static Tensor scalar(cx value);

  const std::vector<Leg>& legs() const { return legs_; }
  std::size_t rank() const { return legs_.size(); }
  std::size_t size() const { return data_.size(); }
  std::span<const cx> data() const { return data_; }
  std::span<cx> mutable_data() {
    norm_cache_.reset();
    return data_;
  }

  bool has_leg(std::string_view label) const;
  std::size_t leg_position(std::string_view label) const;  // throws ErrorKind::argument
  std::size_t dim_of(std::string_view label) const;

  cx& at(std::span<const std::size_t> indices);
  cx at(std::span<const std::size_t> indices) const;
  cx& operator[](std::size_t flat) {
    norm_cache_.reset();
    return data_[flat];
  }
  cx operator[](std::size_t flat) const { return data_[flat]; }

  /// Value of a rank-0 tensor.
  cx scalar_value() const;

  /// Strides (row-major) per leg.
  std::vector<std::size_t> strides() const;

  Tensor conjugate() const;

  /// Legs reordered to legs()[order[0]], legs()[order[1]], ...
  Tensor permuted(std::span<const std::size_t> order) const;
  Tensor permuted(std::initializer_list<std::size_t> order) const;

  /// Same data, legs renamed according to (old, new) pairs.
  Tensor relabeled(const std::vector<std::pair<std::string, std::string>>& renames) const;

  /// Frobenius norm; cached after first evaluation.
  double norm() const;

  /// View this tensor as a matrix with the first `row_legs` legs as rows.
  Eigen::Map<const Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  matrix_view(std::size_t row_legs) const;

  Matrix to_matrix(std::size_t row_legs) const;

 private:
  void check_invariants() const;

  std::vector<Leg> legs_;
  std::vector<cx> data_;
  mutable std::optional<double> norm_cache_;
};

struct LegGrouping {
  struct Group {
    std::string label;                 // label of the composite leg
    std::vector<std::string> members;  // ordered member legs
  };
  std::vector<Group> groups;
};

/// Pairwise contraction. Paired legs must have equal dims and no leg may be
/// paired twice. The result carries the unpaired legs of `a` then of `b`, in
/// their original order.
Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<std::string, std::string>>& pairs);

/// Bijective regrouping of legs into composite legs; Frobenius norm unchanged.
/// The grouping must partition exactly the tensor's legs.
Tensor regroup(const Tensor& t, const LegGrouping& grouping);

/// Inverse of regroup for one composite leg: splits `label` into `parts`
/// (product of part dims must equal the composite dim).
Tensor split_leg(const Tensor& t, std::string_view label, const std::vector<Leg>& parts);

/// Sums the diagonal over each (first, second) leg pair; remaining legs keep
/// their order.
Tensor partial_trace(const Tensor& t,
                     const std::vector<std::pair<std::string, std::string>>& pairs);

/// For a 4-leg tensor U with legs (i, j, k, l) of equal dim, interpreted as a
/// matrix U_{ij,kl}, returns the tensor R with R_{ik,jl} = U_{ij,kl} (legs
/// reordered to (i, k, j, l)). Applying it twice restores the input.
Tensor reshuffle(const Tensor& u);

/// Identity matrix as a 2-leg tensor (row leg first).
Tensor identity_tensor(std::string row, std::string col, std::size_t dim);

Tensor tensor_from_matrix(const Matrix& m, Leg row, Leg col);

/// Applies matrix `m` to one leg: out[..., r, ...] = sum_c m(r, c) t[..., c, ...].
/// The leg keeps its label and position.
Tensor apply_matrix_to_leg(const Tensor& t, std::string_view label, const Matrix& m);

/// Relative Frobenius distance ||a - b|| / max(||a||, ||b||, 1e-300); legs must
/// match in order and dims.
double relative_distance(const Tensor& a, const Tensor& b);

/// Serialization: JSON header (legs, scalar type, byte order) followed by a
/// little-endian interleaved re/im float64 payload.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace htn
