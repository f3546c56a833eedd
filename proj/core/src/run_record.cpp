#include "ddfire/run_record.hpp"

#include <cmath>
#include <ostream>

namespace ddfire {

namespace {
void cell(std::ostream& out, double v) {
  out << ',';
  if (!std::isnan(v)) out << v;
}
}  // namespace

std::string run_csv_header() {
  return "solver,trial,step,iter,sigma2,nu,resid_sq,sigma_hat_y2,cg_iters,nu_z_bar,nu_z_hat,"
         "sigma_y_bar2,pseudo_resid_sq,true_nu,true_sigma2,mse,ep_degenerate";
}

void RunRecord::append(const RunRecord& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

void RunRecord::set_trial(int trial) {
  for (auto& row : rows) row.trial = trial;
}

void RunRecord::write_csv(std::ostream& out, bool header) const {
  if (header) out << run_csv_header() << '\n';
  const auto old_precision = out.precision(12);
  for (const auto& r : rows) {
    out << r.solver << ',' << r.trial << ',' << r.step << ',' << r.iter;
    for (double v : {r.sigma2, r.nu, r.resid_sq, r.sigma_hat_y2, r.cg_iters, r.nu_z_bar,
                     r.nu_z_hat, r.sigma_y_bar2, r.pseudo_resid_sq, r.true_nu, r.true_sigma2,
                     r.mse})
      cell(out, v);
    out << ',' << (r.ep_degenerate ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace ddfire
