#include "flq/segment.hpp"

#include <algorithm>

namespace flq {

std::vector<double> uniform_breaks(double h, int panels) {
  std::vector<double> b(panels + 1);
  for (int i = 0; i <= panels; ++i) b[i] = h * double(i) / panels;
  b.back() = h;
  return b;
}

// Breakpoints aligned with the lag offsets: dual densities produced by the
// adjoint flow kink exactly at theta = tau_j, so panels must end there.
std::vector<double> lag_breaks(const std::vector<double>& delays, double h,
                               int min_panels) {
  std::vector<double> b{0.0, h};
  for (double t : delays)
    if (t > 1e-12 && t < h - 1e-12) b.push_back(t);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end(),
                      [h](double x, double y) {
                        return std::abs(x - y) < 1e-12 * (1.0 + h);
                      }),
          b.end());
  // split the widest panels until the requested resolution is reached
  while (int(b.size()) - 1 < min_panels) {
    int widest = 0;
    for (int i = 1; i + 1 < int(b.size()); ++i)
      if (b[i + 1] - b[i] > b[widest + 1] - b[widest]) widest = i;
    b.insert(b.begin() + widest + 1, (b[widest] + b[widest + 1]) / 2.0);
  }
  return b;
}

}  // namespace flq
