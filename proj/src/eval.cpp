#include "rgbmpc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rgbmpc {

namespace {

void check_dims(const Dims3& dims) {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) throw InputError("evaluation grid needs at least 2 points per axis");
}

// Per-slab partial sums, reduced in slab order so the result does not depend on the thread count.
struct SlabStats {
  std::size_t inside = 0, collisions = 0, misclassified = 0;
  double l1_sum = 0.0, l1_max = 0.0;
};

}  // namespace

VolumetricReport volumetric_metrics(const SdfFunction& pred, const SdfFunction& oracle, const Aabb& region,
                                    const Dims3& dims) {
  check_dims(dims);
  if (!(region.volume() > 0)) throw InputError("evaluation region is empty");
  std::vector<SlabStats> slabs(dims[2]);
  parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t k) {
    SlabStats s;
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 p = grid_point(region, dims, i, j, static_cast<int>(k));
        const double gt = oracle(p), pr = pred(p);
        if (gt <= 0) {
          ++s.inside;
          if (pr > 0) {
            ++s.collisions;
            const double e = std::abs(pr - gt);
            s.l1_sum += e;
            s.l1_max = std::max(s.l1_max, e);
          }
        }
        if ((gt <= 0) != (pr <= 0)) ++s.misclassified;
      }
    }
    slabs[k] = s;
  });
  VolumetricReport r;
  r.region = region;
  r.dims = dims;
  r.samples = grid_count(dims);
  double l1 = 0.0, l1max = 0.0;
  for (const auto& s : slabs) {
    r.inside += s.inside;
    r.collisions += s.collisions;
    r.misclassified += s.misclassified;
    l1 += s.l1_sum;
    l1max = std::max(l1max, s.l1_max);
  }
  r.collision_pct = r.inside ? 100.0 * r.collisions / r.inside : 0.0;
  r.collision_pct_all = 100.0 * r.collisions / r.samples;
  r.misclassification_pct = 100.0 * r.misclassified / r.samples;
  if (r.collisions) {
    r.mean_l1_cm = 100.0 * l1 / r.collisions;
    r.max_l1_cm = 100.0 * l1max;
  }
  return r;
}

VolumetricReport volumetric_metrics(const SdfGrid& pred, const SdfFunction& oracle, const Aabb& region,
                                    const Dims3& dims) {
  const double tol = 1e-9;
  if (!pred.bounds.contains(region.lo, tol) || !pred.bounds.contains(region.hi, tol)) {
    std::ostringstream os;
    os << "evaluation region [" << region.lo.transpose() << "] - [" << region.hi.transpose()
       << "] is not inside the ESDF bounds [" << pred.bounds.lo.transpose() << "] - [" << pred.bounds.hi.transpose() << "]";
    throw InputError(os.str());
  }
  return volumetric_metrics([&](const Vec3& p) { return query(pred, p); }, oracle, region, dims);
}

NearSurfaceSamples near_surface_samples(const SdfFunction& pred, const SdfFunction& oracle, const Aabb& region,
                                        const Dims3& dims, double max_band) {
  check_dims(dims);
  std::vector<NearSurfaceSamples> slabs(dims[2]);
  parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t k) {
    auto& s = slabs[k];
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 p = grid_point(region, dims, i, j, static_cast<int>(k));
        const double gt = oracle(p);
        if (std::abs(gt) > max_band) continue;
        s.distance.push_back(static_cast<float>(std::abs(gt)));
        s.error.push_back(static_cast<float>(std::abs(pred(p) - gt)));
      }
    }
  });
  NearSurfaceSamples out;
  for (auto& s : slabs) {
    out.distance.insert(out.distance.end(), s.distance.begin(), s.distance.end());
    out.error.insert(out.error.end(), s.error.begin(), s.error.end());
  }
  return out;
}

AccuracyCurve accuracy_curve(const NearSurfaceSamples& s, const std::vector<double>& thresholds_cm, double band_cm) {
  if (!std::is_sorted(thresholds_cm.begin(), thresholds_cm.end())) throw InputError("accuracy thresholds must ascend");
  AccuracyCurve c;
  c.band_cm = band_cm;
  c.thresholds_cm = thresholds_cm;
  std::vector<float> errors;
  const double band = band_cm / 100.0;
  for (std::size_t i = 0; i < s.distance.size(); ++i)
    if (s.distance[i] <= band) errors.push_back(s.error[i]);
  if (errors.empty()) throw InputError("no samples within the surface band");
  std::sort(errors.begin(), errors.end());
  c.samples = errors.size();
  for (double t : thresholds_cm) {
    // strict comparison: count errors < t
    const auto n = std::lower_bound(errors.begin(), errors.end(), static_cast<float>(t / 100.0)) - errors.begin();
    c.fraction.push_back(static_cast<double>(n) / errors.size());
  }
  return c;
}

BandL1Curve band_l1_curve(const NearSurfaceSamples& s, const std::vector<double>& bands_cm) {
  BandL1Curve c;
  c.bands_cm = bands_cm;
  for (double b : bands_cm) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.distance.size(); ++i) {
      if (s.distance[i] <= b / 100.0) {
        sum += s.error[i];
        ++n;
      }
    }
    c.mean_l1_cm.push_back(n ? 100.0 * sum / n : 0.0);
    c.samples.push_back(n);
  }
  return c;
}

std::vector<double> default_thresholds_cm() {
  std::vector<double> t;
  for (int i = 1; i <= 50; ++i) t.push_back(0.1 * i);
  return t;
}

std::vector<double> default_bands_cm() {
  std::vector<double> t;
  for (int i = 1; i <= 10; ++i) t.push_back(0.5 * i);
  return t;
}

ControlReport control_metrics(const ArmModel& model, const SdfFunction& oracle, const std::vector<EpisodeResult>& episodes,
                              double tolerance) {
  if (episodes.empty()) throw InputError("control metrics need at least one episode");
  ControlReport r;
  std::vector<Vec3> centers(model.spheres.size());
  double err_sum = 0.0, err_success = 0.0;
  int successes = 0;
  for (const auto& ep : episodes) {
    if (ep.trajectory.empty()) throw InputError("episode has an empty trajectory");
    double pen = 0.0;
    for (const auto& s : ep.trajectory) {
      sphere_centers(model, s.q.data(), centers.data(), nullptr);
      for (std::size_t k = 0; k < centers.size(); ++k) pen = std::max(pen, model.spheres[k].radius - oracle(centers[k]));
    }
    EpisodeReport e;
    e.penetration_cm = 100.0 * pen;
    e.goal_error_cm = 100.0 * ep.final_error;
    e.steps = ep.steps;
    e.success = ep.final_error < tolerance && pen <= 0.0;
    r.max_penetration_cm = std::max(r.max_penetration_cm, e.penetration_cm);
    err_sum += e.goal_error_cm;
    if (e.success) {
      ++successes;
      err_success += e.goal_error_cm;
    }
    r.episodes.push_back(e);
  }
  r.goal_error_cm = err_sum / episodes.size();
  r.goal_error_success_cm = successes ? err_success / successes : 0.0;
  r.success_rate_pct = 100.0 * successes / episodes.size();
  return r;
}

// ---------------------------------------------------------------------------
// reports

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(6);
  return out;
}

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::setprecision(6) << *v;
  return os.str();
}

}  // namespace

void write_volumetric_csv(const std::filesystem::path& path, const std::vector<VolumetricRow>& rows) {
  auto out = open_out(path);
  out << "# rgbmpc volumetric v1; L1 in cm over the collision set, NA when it is empty\n";
  out << "method,scene,collision_pct,misclassification_pct,mean_l1_cm,max_l1_cm,collision_pct_all,samples,inside,"
         "nx,ny,nz\n";
  for (const auto& r : rows) {
    const auto& v = r.report;
    out << r.method << "," << r.scene << "," << v.collision_pct << "," << v.misclassification_pct << ","
        << opt_str(v.mean_l1_cm) << "," << opt_str(v.max_l1_cm) << "," << v.collision_pct_all << "," << v.samples
        << "," << v.inside << "," << v.dims[0] << "," << v.dims[1] << "," << v.dims[2] << "\n";
  }
}

void write_accuracy_csv(const std::filesystem::path& path, const AccuracyCurve& acc, const BandL1Curve& l1) {
  auto out = open_out(path);
  out << "# rgbmpc accuracy v1; band " << acc.band_cm << " cm, " << acc.samples << " samples\n";
  out << "kind,x_cm,value\n";
  for (std::size_t i = 0; i < acc.thresholds_cm.size(); ++i)
    out << "accuracy," << acc.thresholds_cm[i] << "," << acc.fraction[i] << "\n";
  for (std::size_t i = 0; i < l1.bands_cm.size(); ++i) out << "band_l1_cm," << l1.bands_cm[i] << "," << l1.mean_l1_cm[i] << "\n";
}

void write_control_csv(const std::filesystem::path& path, const ControlReport& r) {
  auto out = open_out(path);
  out << "# rgbmpc control v1; max_penetration_cm " << r.max_penetration_cm << ", goal_error_cm " << r.goal_error_cm
      << ", goal_error_success_cm " << r.goal_error_success_cm << ", success_rate_pct " << r.success_rate_pct << "\n";
  out << "episode,success,goal_error_cm,penetration_cm,steps\n";
  for (std::size_t i = 0; i < r.episodes.size(); ++i) {
    const auto& e = r.episodes[i];
    out << i << "," << (e.success ? 1 : 0) << "," << e.goal_error_cm << "," << e.penetration_cm << "," << e.steps << "\n";
  }
}

void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<PlotSeries>& series) {
  const double W = 480, H = 320, L = 60, R = 20, T = 30, B = 45;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x0 = x1 = s.x[i];
        y0 = std::min(0.0, s.y[i]);
        y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\" font-size=\"10\">" << xv << "</text>\n";
    out << "<text x=\"" << L - 5 << "\" y=\"" << py(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">" << yv << "</text>\n";
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  out << "<text x=\"14\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
      << ")\">" << ylabel << "</text>\n";
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<polyline fill=\"none\" stroke=\"" << colors[s % 5] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) out << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << W - R - 5 << "\" y=\"" << T + 14 * (s + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
        << colors[s % 5] << "\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace rgbmpc
