// Gradient of ||SVT(A, tau)||_1 for a matrix with two identical singular
// values, under every backward mode.
#include <cstdio>

#include "svdinv/svdinv.hpp"

int main() {
  using namespace svdinv;
  Matrix<double> a = Matrix<double>::Zero(4, 4);
  a.diagonal() << 3.0, 2.0, 2.0, 0.5;
  const ThresholdSpec spec = ThresholdSpec::soft(1.0);
  const SvtResult<double> r = svt(a, spec);
  const Matrix<double> bbar = r.B.unaryExpr([](double z) { return z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0); });
  // The dense-basis cotangent exercises every pair, not only the diagonal.
  const Matrix<double> ubar = Matrix<double>::Ones(4, 4);

  std::printf("singular values: %g %g %g %g\n", r.factors.S(0), r.factors.S(1), r.factors.S(2),
              r.factors.S(3));
  for (const GradMode& m : {GradMode::exact(), GradMode::tf(), GradMode::clip(), GradMode::taylor(),
                            GradMode::inv()}) {
    const Matrix<double> g1 = svt_vjp(bbar, r, spec, m).Abar;
    const Matrix<double> g2 = svd_vjp<double>(r.factors, ubar, {}, {}, m);
    std::printf("%-7s  svt l1: finite=%d |grad|=%-12.6g  U-cotangent: finite=%d |grad|=%.6g\n",
                m.name().c_str(), all_finite(g1), g1.norm(), all_finite(g2), g2.norm());
  }
}
