#pragma once

// Metrics comparing a predicted signed distance against the analytic oracle, and closed-loop
// episode statistics.

#include "rgbmpc/control.hpp"
#include "rgbmpc/esdf.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rgbmpc {

using SdfFunction = std::function<double(const Vec3&)>;

struct VolumetricReport {
  /// Inside points (oracle < 0) predicted outside (pred > 0), over the inside count.
  double collision_pct = 0.0;
  /// Same numerator over all samples.
  double collision_pct_all = 0.0;
  /// Points whose inside/outside label differs; a distance of exactly 0 counts as inside.
  double misclassification_pct = 0.0;
  /// L1 over the collision set in cm; empty when that set is empty.
  std::optional<double> mean_l1_cm;
  std::optional<double> max_l1_cm;
  std::size_t samples = 0;
  std::size_t inside = 0;
  std::size_t collisions = 0;
  std::size_t misclassified = 0;
  Aabb region;
  Dims3 dims{0, 0, 0};
};

/// Scans the cell-vertex grid over region. Parallel over z slabs; counts are exact.
VolumetricReport volumetric_metrics(const SdfFunction& pred, const SdfFunction& oracle, const Aabb& region,
                                    const Dims3& dims);
/// Grid version; throws InputError when region is not inside the grid bounds.
VolumetricReport volumetric_metrics(const SdfGrid& pred, const SdfFunction& oracle, const Aabb& region,
                                    const Dims3& dims);

struct AccuracyCurve {
  std::vector<double> thresholds_cm;
  std::vector<double> fraction;  // share of band samples with |pred - oracle| < threshold
  double band_cm = 5.0;
  std::size_t samples = 0;
};

/// Mean |pred - oracle| among samples with |oracle| <= band, for each band.
struct BandL1Curve {
  std::vector<double> bands_cm;
  std::vector<double> mean_l1_cm;
  std::vector<std::size_t> samples;
};

/// Absolute oracle distance and absolute error of every sample with |oracle| <= max_band (meters).
struct NearSurfaceSamples {
  std::vector<float> distance;
  std::vector<float> error;
};

NearSurfaceSamples near_surface_samples(const SdfFunction& pred, const SdfFunction& oracle, const Aabb& region,
                                        const Dims3& dims, double max_band);

/// Throws InputError when no sample lies in the band.
AccuracyCurve accuracy_curve(const NearSurfaceSamples& s, const std::vector<double>& thresholds_cm, double band_cm = 5.0);
BandL1Curve band_l1_curve(const NearSurfaceSamples& s, const std::vector<double>& bands_cm);

/// 0.1 cm steps up to 5 cm.
std::vector<double> default_thresholds_cm();
/// 0.5 cm steps up to 5 cm.
std::vector<double> default_bands_cm();

struct EpisodeReport {
  bool success = false;
  double goal_error_cm = 0.0;
  double penetration_cm = 0.0;
  int steps = 0;
};

struct ControlReport {
  double max_penetration_cm = 0.0;
  double goal_error_cm = 0.0;          // mean final error over all episodes
  double goal_error_success_cm = 0.0;  // mean final error over successful episodes (0 when none)
  double success_rate_pct = 0.0;
  std::vector<EpisodeReport> episodes;
};

/// Penetration is recomputed from the trajectories against oracle only. Success means final
/// error below tolerance and no penetration. Throws InputError on an empty list.
ControlReport control_metrics(const ArmModel& model, const SdfFunction& oracle, const std::vector<EpisodeResult>& episodes,
                              double tolerance = 0.01);

// ---------------------------------------------------------------------------
// reports

struct VolumetricRow {
  std::string method;
  std::string scene;
  VolumetricReport report;
};

/// "# rgbmpc volumetric v1" then collision_pct,misclassification_pct,mean_l1_cm,max_l1_cm,... rows.
void write_volumetric_csv(const std::filesystem::path& path, const std::vector<VolumetricRow>& rows);
void write_accuracy_csv(const std::filesystem::path& path, const AccuracyCurve& acc, const BandL1Curve& l1);
void write_control_csv(const std::filesystem::path& path, const ControlReport& report);

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};
/// Minimal line plot.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<PlotSeries>& series);

}  // namespace rgbmpc
