#include "ddfire/operators.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>

#include <Eigen/SVD>

#include "ddfire/errors.hpp"

namespace ddfire::operators {

using Complex = std::complex<double>;

std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kDense: return "dense";
    case OperatorKind::kMask: return "mask";
    case OperatorKind::kCircularConvolution: return "circular-convolution";
    case OperatorKind::kDecimatedConvolution: return "decimated-convolution";
    case OperatorKind::kOversampledFourier: return "oversampled-fourier";
    case OperatorKind::kCodedDiffraction: return "coded-diffraction";
  }
  return "unknown";
}

ComplexVector to_complex(const Measurement& interleaved) {
  require(interleaved.size() % 2 == 0, "to_complex: odd-length interleaved vector");
  ComplexVector z(interleaved.size() / 2);
  for (Index j = 0; j < z.size(); ++j) z[j] = {interleaved[2 * j], interleaved[2 * j + 1]};
  return z;
}

Measurement to_interleaved(const ComplexVector& z) {
  Measurement y(2 * z.size());
  for (Index j = 0; j < z.size(); ++j) {
    y[2 * j] = z[j].real();
    y[2 * j + 1] = z[j].imag();
  }
  return y;
}

namespace {

// FFTW planning is not thread-safe; execution with new arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Unnormalised 2-D complex FFT pair with plans usable on any buffer.
class Fft2d {
 public:
  Fft2d(Index rows, Index cols) : rows_(rows), cols_(cols) {
    std::vector<Complex> a(static_cast<size_t>(rows * cols)), b(a.size());
    std::lock_guard lock(fftw_planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols),
                                reinterpret_cast<fftw_complex*>(a.data()),
                                reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD, flags);
    inverse_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols),
                                reinterpret_cast<fftw_complex*>(a.data()),
                                reinterpret_cast<fftw_complex*>(b.data()), FFTW_BACKWARD, flags);
  }
  ~Fft2d() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  Index size() const { return rows_ * cols_; }

  void forward(const std::vector<Complex>& in, std::vector<Complex>& out) const {
    execute(forward_, in, out);
  }
  void inverse(const std::vector<Complex>& in, std::vector<Complex>& out) const {
    execute(inverse_, in, out);
  }

 private:
  void execute(fftw_plan plan, const std::vector<Complex>& in, std::vector<Complex>& out) const {
    out.resize(in.size());
    // FFTW does not modify the input of an out-of-place c2c transform.
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
  }

  Index rows_, cols_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace

class OperatorImpl {
 public:
  virtual ~OperatorImpl() = default;
  virtual OperatorKind kind() const = 0;
  virtual Index input_size() const = 0;
  virtual Index output_size() const = 0;
  virtual bool is_complex() const { return false; }
  virtual ImageShape shape() const { return {1, input_size()}; }
  virtual Measurement apply(const Signal& x) const = 0;
  virtual Signal adjoint(const Measurement& y) const = 0;
  virtual std::optional<double> closed_form_smax() const { return std::nullopt; }
  virtual std::optional<double> closed_form_frobenius_sq() const { return std::nullopt; }
  virtual Matrix dense() const {
    Matrix A(output_size(), input_size());
    Signal e = Signal::Zero(input_size());
    for (Index j = 0; j < input_size(); ++j) {
      e[j] = 1.0;
      A.col(j) = apply(e);
      e[j] = 0.0;
    }
    return A;
  }
  virtual const std::vector<Index>* indices() const { return nullptr; }
  virtual const std::vector<ComplexVector>* phase_masks() const { return nullptr; }
};

namespace {

class DenseImpl final : public OperatorImpl {
 public:
  explicit DenseImpl(Matrix A) : A_(std::move(A)) {}
  OperatorKind kind() const override { return OperatorKind::kDense; }
  Index input_size() const override { return A_.cols(); }
  Index output_size() const override { return A_.rows(); }
  Measurement apply(const Signal& x) const override { return A_ * x; }
  Signal adjoint(const Measurement& y) const override { return A_.transpose() * y; }
  std::optional<double> closed_form_frobenius_sq() const override { return A_.squaredNorm(); }
  Matrix dense() const override { return A_; }

 private:
  Matrix A_;
};

class MaskImpl final : public OperatorImpl {
 public:
  MaskImpl(Index d, std::vector<Index> keep, ImageShape shape)
      : d_(d), keep_(std::move(keep)), shape_(shape) {}
  OperatorKind kind() const override { return OperatorKind::kMask; }
  Index input_size() const override { return d_; }
  Index output_size() const override { return static_cast<Index>(keep_.size()); }
  ImageShape shape() const override { return shape_; }
  Measurement apply(const Signal& x) const override {
    Measurement y(output_size());
    for (size_t i = 0; i < keep_.size(); ++i) y[static_cast<Index>(i)] = x[keep_[i]];
    return y;
  }
  Signal adjoint(const Measurement& y) const override {
    Signal x = Signal::Zero(d_);
    for (size_t i = 0; i < keep_.size(); ++i) x[keep_[i]] += y[static_cast<Index>(i)];
    return x;
  }
  std::optional<double> closed_form_smax() const override { return keep_.empty() ? 0.0 : 1.0; }
  std::optional<double> closed_form_frobenius_sq() const override {
    return static_cast<double>(keep_.size());
  }
  const std::vector<Index>* indices() const override { return &keep_; }

 private:
  Index d_;
  std::vector<Index> keep_;
  ImageShape shape_;
};

/// Circular convolution, optionally followed by decimation.
class ConvolutionImpl final : public OperatorImpl {
 public:
  ConvolutionImpl(ImageShape shape, const Matrix& kernel, Index factor)
      : shape_(shape), factor_(factor), fft_(shape.rows, shape.cols) {
    const Index n = shape.size();
    std::vector<Complex> taps(static_cast<size_t>(n), Complex{0.0, 0.0});
    const Index cr = kernel.rows() / 2, cc = kernel.cols() / 2;
    for (Index i = 0; i < kernel.rows(); ++i) {
      for (Index j = 0; j < kernel.cols(); ++j) {
        const Index r = ((i - cr) % shape.rows + shape.rows) % shape.rows;
        const Index c = ((j - cc) % shape.cols + shape.cols) % shape.cols;
        taps[static_cast<size_t>(r * shape.cols + c)] += kernel(i, j);
      }
    }
    wrapped_sq_ = 0.0;
    for (const Complex& t : taps) wrapped_sq_ += std::norm(t);
    fft_.forward(taps, transfer_);
    out_rows_ = (shape.rows + factor - 1) / factor;
    out_cols_ = (shape.cols + factor - 1) / factor;
  }

  OperatorKind kind() const override {
    return factor_ == 1 ? OperatorKind::kCircularConvolution
                        : OperatorKind::kDecimatedConvolution;
  }
  Index input_size() const override { return shape_.size(); }
  Index output_size() const override { return out_rows_ * out_cols_; }
  ImageShape shape() const override { return shape_; }

  Measurement apply(const Signal& x) const override {
    const Signal full = filter(x, false);
    if (factor_ == 1) return full;
    Measurement y(output_size());
    for (Index r = 0; r < out_rows_; ++r)
      for (Index c = 0; c < out_cols_; ++c)
        y[r * out_cols_ + c] = full[(r * factor_) * shape_.cols + c * factor_];
    return y;
  }

  Signal adjoint(const Measurement& y) const override {
    if (factor_ == 1) return filter(y, true);
    Signal up = Signal::Zero(shape_.size());
    for (Index r = 0; r < out_rows_; ++r)
      for (Index c = 0; c < out_cols_; ++c)
        up[(r * factor_) * shape_.cols + c * factor_] = y[r * out_cols_ + c];
    return filter(up, true);
  }

  std::optional<double> closed_form_smax() const override {
    if (factor_ != 1) return std::nullopt;
    double best = 0.0;
    for (const Complex& h : transfer_) best = std::max(best, std::abs(h));
    return best;
  }
  std::optional<double> closed_form_frobenius_sq() const override {
    // Every kept output row is a circular shift of the wrapped kernel.
    return static_cast<double>(output_size()) * wrapped_sq_;
  }

 private:
  Signal filter(const Signal& x, bool conjugate) const {
    const Index n = shape_.size();
    std::vector<Complex> buf(static_cast<size_t>(n)), spec;
    for (Index i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = x[i];
    fft_.forward(buf, spec);
    for (size_t i = 0; i < spec.size(); ++i)
      spec[i] *= conjugate ? std::conj(transfer_[i]) : transfer_[i];
    fft_.inverse(spec, buf);
    Signal out(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) out[i] = buf[static_cast<size_t>(i)].real() * scale;
    return out;
  }

  ImageShape shape_;
  Index factor_;
  Fft2d fft_;
  std::vector<Complex> transfer_;
  double wrapped_sq_ = 0.0;
  Index out_rows_ = 0, out_cols_ = 0;
};

class OversampledFourierImpl final : public OperatorImpl {
 public:
  explicit OversampledFourierImpl(ImageShape shape)
      : shape_(shape), fft_(2 * shape.rows, 2 * shape.cols) {}
  OperatorKind kind() const override { return OperatorKind::kOversampledFourier; }
  Index input_size() const override { return shape_.size(); }
  Index output_size() const override { return 2 * fft_.size(); }
  bool is_complex() const override { return true; }
  ImageShape shape() const override { return shape_; }

  Measurement apply(const Signal& x) const override {
    const Index pc = 2 * shape_.cols;
    std::vector<Complex> buf(static_cast<size_t>(fft_.size()), Complex{0.0, 0.0}), spec;
    for (Index r = 0; r < shape_.rows; ++r)
      for (Index c = 0; c < shape_.cols; ++c)
        buf[static_cast<size_t>(r * pc + c)] = x[r * shape_.cols + c];
    fft_.forward(buf, spec);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fft_.size()));
    Measurement y(output_size());
    for (size_t j = 0; j < spec.size(); ++j) {
      y[2 * static_cast<Index>(j)] = spec[j].real() * scale;
      y[2 * static_cast<Index>(j) + 1] = spec[j].imag() * scale;
    }
    return y;
  }

  Signal adjoint(const Measurement& y) const override {
    const Index pc = 2 * shape_.cols;
    std::vector<Complex> spec(static_cast<size_t>(fft_.size())), buf;
    for (size_t j = 0; j < spec.size(); ++j)
      spec[j] = {y[2 * static_cast<Index>(j)], y[2 * static_cast<Index>(j) + 1]};
    fft_.inverse(spec, buf);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fft_.size()));
    Signal x(shape_.size());
    for (Index r = 0; r < shape_.rows; ++r)
      for (Index c = 0; c < shape_.cols; ++c)
        x[r * shape_.cols + c] = buf[static_cast<size_t>(r * pc + c)].real() * scale;
    return x;
  }

  std::optional<double> closed_form_smax() const override { return 1.0; }
  std::optional<double> closed_form_frobenius_sq() const override {
    return static_cast<double>(shape_.size());
  }

 private:
  ImageShape shape_;
  Fft2d fft_;
};

class CodedDiffractionImpl final : public OperatorImpl {
 public:
  CodedDiffractionImpl(ImageShape shape, std::vector<ComplexVector> masks)
      : shape_(shape), masks_(std::move(masks)), fft_(shape.rows, shape.cols) {}
  OperatorKind kind() const override { return OperatorKind::kCodedDiffraction; }
  Index input_size() const override { return shape_.size(); }
  Index output_size() const override {
    return 2 * static_cast<Index>(masks_.size()) * shape_.size();
  }
  bool is_complex() const override { return true; }
  ImageShape shape() const override { return shape_; }

  Measurement apply(const Signal& x) const override {
    const Index n = shape_.size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(n * Index(masks_.size())));
    Measurement y(output_size());
    std::vector<Complex> buf(static_cast<size_t>(n)), spec;
    for (size_t l = 0; l < masks_.size(); ++l) {
      for (Index i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = masks_[l][i] * x[i];
      fft_.forward(buf, spec);
      const Index base = 2 * static_cast<Index>(l) * n;
      for (Index j = 0; j < n; ++j) {
        y[base + 2 * j] = spec[static_cast<size_t>(j)].real() * scale;
        y[base + 2 * j + 1] = spec[static_cast<size_t>(j)].imag() * scale;
      }
    }
    return y;
  }

  Signal adjoint(const Measurement& y) const override {
    const Index n = shape_.size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(n * Index(masks_.size())));
    Signal x = Signal::Zero(n);
    std::vector<Complex> spec(static_cast<size_t>(n)), buf;
    for (size_t l = 0; l < masks_.size(); ++l) {
      const Index base = 2 * static_cast<Index>(l) * n;
      for (Index j = 0; j < n; ++j)
        spec[static_cast<size_t>(j)] = {y[base + 2 * j], y[base + 2 * j + 1]};
      fft_.inverse(spec, buf);
      for (Index i = 0; i < n; ++i)
        x[i] += (std::conj(masks_[l][i]) * buf[static_cast<size_t>(i)]).real() * scale;
    }
    return x;
  }

  std::optional<double> closed_form_smax() const override { return 1.0; }
  std::optional<double> closed_form_frobenius_sq() const override {
    return static_cast<double>(shape_.size());
  }
  const std::vector<ComplexVector>* phase_masks() const override { return &masks_; }

 private:
  ImageShape shape_;
  std::vector<ComplexVector> masks_;
  Fft2d fft_;
};

}  // namespace

LinearOperator::LinearOperator(std::shared_ptr<const OperatorImpl> impl) : impl_(std::move(impl)) {
  if (auto f = impl_->closed_form_frobenius_sq()) {
    frob_sq_ = *f;
  } else {
    frob_sq_ = impl_->dense().squaredNorm();
  }
  if (auto s = impl_->closed_form_smax()) {
    s_max_ = *s;
  } else {
    s_max_ = power_iteration_smax(*this, 2000, 1e-13).value;
  }
}

namespace {
const OperatorImpl& checked(const std::shared_ptr<const OperatorImpl>& impl) {
  require(static_cast<bool>(impl), "LinearOperator: use of an empty operator");
  return *impl;
}
}  // namespace

OperatorKind LinearOperator::kind() const { return checked(impl_).kind(); }
Index LinearOperator::input_size() const { return checked(impl_).input_size(); }
Index LinearOperator::output_size() const { return checked(impl_).output_size(); }
bool LinearOperator::is_complex() const { return checked(impl_).is_complex(); }
Index LinearOperator::channel_size() const {
  return is_complex() ? output_size() / 2 : output_size();
}
ImageShape LinearOperator::image_shape() const { return checked(impl_).shape(); }

Measurement LinearOperator::apply(const Signal& x) const {
  const auto& impl = checked(impl_);
  if (x.size() != impl.input_size()) {
    throw ContractViolation("apply: signal length " + std::to_string(x.size()) +
                            " does not match operator input size " +
                            std::to_string(impl.input_size()));
  }
  return impl.apply(x);
}

Signal LinearOperator::adjoint(const Measurement& y) const {
  const auto& impl = checked(impl_);
  if (y.size() != impl.output_size()) {
    throw ContractViolation("adjoint: measurement length " + std::to_string(y.size()) +
                            " does not match operator output size " +
                            std::to_string(impl.output_size()));
  }
  return impl.adjoint(y);
}

Signal LinearOperator::normal(const Signal& x) const { return adjoint(apply(x)); }

const SvdFactors& LinearOperator::svd() const {
  require(has_svd(), "svd: operator has no SVD factors attached");
  return *svd_;
}

Matrix LinearOperator::to_dense() const { return checked(impl_).dense(); }

LinearOperator LinearOperator::with_svd() const {
  const Matrix A = to_dense();
  Eigen::BDCSVD<Matrix> solver(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  auto factors = std::make_shared<SvdFactors>();
  factors->U = solver.matrixU();
  factors->V = solver.matrixV();
  factors->s = Vector::Zero(A.cols());
  const Vector& sv = solver.singularValues();
  factors->s.head(sv.size()) = sv;
  LinearOperator out = *this;
  out.s_max_ = sv.size() > 0 ? sv[0] : 0.0;
  out.svd_ = std::move(factors);
  return out;
}

LinearOperator LinearOperator::with_frobenius_sq(double frob_sq) const {
  require(frob_sq > 0.0, "with_frobenius_sq: value must be positive");
  LinearOperator out = *this;
  out.frob_sq_ = frob_sq;
  return out;
}

const std::vector<Index>& LinearOperator::mask_indices() const {
  const auto* idx = checked(impl_).indices();
  require(idx != nullptr, "mask_indices: operator is not a mask");
  return *idx;
}

const std::vector<ComplexVector>& LinearOperator::cdp_masks() const {
  const auto* m = checked(impl_).phase_masks();
  require(m != nullptr, "cdp_masks: operator is not a coded-diffraction operator");
  return *m;
}

LinearOperator LinearOperator::dense(Matrix A) {
  require(A.rows() > 0 && A.cols() > 0, "dense: matrix must be non-empty");
  require(A.allFinite(), "dense: matrix has non-finite entries");
  return LinearOperator(std::make_shared<DenseImpl>(std::move(A)));
}

LinearOperator LinearOperator::mask(Index d, std::vector<Index> keep) {
  require(d > 0, "mask: d must be positive");
  for (Index i : keep) require(i >= 0 && i < d, "mask: kept index out of range");
  return LinearOperator(std::make_shared<MaskImpl>(d, std::move(keep), ImageShape{1, d}));
}

LinearOperator LinearOperator::box_inpainting(ImageShape shape, Index row0, Index col0, Index h,
                                              Index w) {
  require(shape.size() > 0, "box_inpainting: empty image");
  require(row0 >= 0 && col0 >= 0 && h >= 0 && w >= 0 && row0 + h <= shape.rows &&
              col0 + w <= shape.cols,
          "box_inpainting: box outside the image");
  std::vector<Index> keep;
  for (Index r = 0; r < shape.rows; ++r) {
    for (Index c = 0; c < shape.cols; ++c) {
      const bool inside = r >= row0 && r < row0 + h && c >= col0 && c < col0 + w;
      if (!inside) keep.push_back(r * shape.cols + c);
    }
  }
  return LinearOperator(std::make_shared<MaskImpl>(shape.size(), std::move(keep), shape));
}

LinearOperator LinearOperator::circular_convolution(ImageShape shape, const Matrix& kernel) {
  require(shape.rows > 0 && shape.cols > 0, "circular_convolution: empty image");
  require(kernel.size() > 0 && kernel.allFinite(), "circular_convolution: invalid kernel");
  return LinearOperator(std::make_shared<ConvolutionImpl>(shape, kernel, 1));
}

LinearOperator LinearOperator::decimated_convolution(ImageShape shape, const Matrix& kernel,
                                                     Index factor) {
  require(shape.rows > 0 && shape.cols > 0, "decimated_convolution: empty image");
  require(factor >= 1, "decimated_convolution: factor must be >= 1");
  require(kernel.size() > 0 && kernel.allFinite(), "decimated_convolution: invalid kernel");
  return LinearOperator(std::make_shared<ConvolutionImpl>(shape, kernel, factor));
}

LinearOperator LinearOperator::oversampled_fourier(ImageShape shape) {
  require(shape.rows > 0 && shape.cols > 0, "oversampled_fourier: empty image");
  return LinearOperator(std::make_shared<OversampledFourierImpl>(shape));
}

LinearOperator LinearOperator::coded_diffraction(ImageShape shape,
                                                 std::vector<ComplexVector> masks) {
  require(shape.rows > 0 && shape.cols > 0, "coded_diffraction: empty image");
  require(!masks.empty(), "coded_diffraction: need at least one mask");
  for (const auto& m : masks) {
    require(m.size() == shape.size(), "coded_diffraction: mask size mismatch");
    for (Index i = 0; i < m.size(); ++i)
      require(std::abs(std::abs(m[i]) - 1.0) < 1e-12, "coded_diffraction: mask entries must have unit modulus");
  }
  return LinearOperator(std::make_shared<CodedDiffractionImpl>(shape, std::move(masks)));
}

Measurement apply(const LinearOperator& op, const Signal& x) { return op.apply(x); }
Signal adjoint(const LinearOperator& op, const Measurement& y) { return op.adjoint(y); }

double estimate_frobenius_sq(const LinearOperator& op, int probes, RandomStream& rng) {
  require(probes >= 1, "estimate_frobenius_sq: need at least one probe");
  double acc = 0.0;
  for (int l = 0; l < probes; ++l) acc += op.apply(rng.normal(op.input_size())).squaredNorm();
  return acc / probes;
}

PowerIterationResult power_iteration_smax(const LinearOperator& op, int max_iterations,
                                          double tol) {
  require(max_iterations >= 1, "power_iteration_smax: max_iterations must be >= 1");
  RandomStream start(0x5EEDULL);
  Signal v = start.normal(op.input_size());
  v.normalize();
  PowerIterationResult out;
  double previous = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Signal w = op.normal(v);
    const double norm = w.norm();
    out.iterations = it;
    if (norm == 0.0) {
      out.value = 0.0;
      out.converged = true;
      return out;
    }
    // ||A^T A v|| -> s_max^2 for unit v
    out.value = std::sqrt(norm);
    v = w / norm;
    if (it > 1 && std::abs(out.value - previous) <= tol * out.value) {
      out.converged = true;
      break;
    }
    previous = out.value;
  }
  // Rayleigh refinement: ||A v|| for the converged unit vector.
  out.value = std::max(out.value, op.apply(v).norm());
  return out;
}

LinearOperator make_osf(ImageShape shape) { return LinearOperator::oversampled_fourier(shape); }

LinearOperator make_cdp(ImageShape shape, RandomStream& rng, int masks) {
  require(masks >= 1, "make_cdp: need at least one mask");
  std::vector<ComplexVector> phases;
  phases.reserve(static_cast<size_t>(masks));
  for (int l = 0; l < masks; ++l) {
    ComplexVector c(shape.size());
    for (Index i = 0; i < c.size(); ++i) c[i] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    phases.push_back(std::move(c));
  }
  return LinearOperator::coded_diffraction(shape, std::move(phases));
}

}  // namespace ddfire::operators
