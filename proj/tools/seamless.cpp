#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"

#ifndef SEAMLESS_VERSION
#define SEAMLESS_VERSION "0.0.0"
#endif

namespace {

using namespace seamless;
using namespace seamless::cli;
using nlohmann::json;

// JSON configuration: top-level keys are global options, nested objects are
// subcommand sections keyed by subcommand name.
class ConfigJSON : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->get_type_size() != 0) {
        if (opt->count() == 1) {
          j[name] = opt->results().at(0);
        } else if (opt->count() > 1) {
          j[name] = opt->results();
        } else if (default_also && !opt->get_default_str().empty()) {
          j[name] = opt->get_default_str();
        }
      } else if (opt->count() > 0) {
        j[name] = true;
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      j[sub->get_name()] = json::parse(to_config(sub, default_also, false, ""));
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "config: top level must be an object");
    return items(j, {});
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw Error(ErrorCode::ParseError, "config: unsupported value " + v.dump());
  }

  std::vector<CLI::ConfigItem> items(const json& j, const std::vector<std::string>& prefix) const {
    std::vector<CLI::ConfigItem> out;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto parents = prefix;
        parents.push_back(key);
        auto sub = items(value, parents);
        out.insert(out.end(), sub.begin(), sub.end());
        continue;
      }
      CLI::ConfigItem item;
      item.parents = prefix;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs = {scalar(value)};
      }
      out.push_back(std::move(item));
    }
    return out;
  }
};

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

ordered_json file_entries(const std::vector<fs::path>& paths) {
  ordered_json arr = ordered_json::array();
  for (const auto& p : paths) {
    const std::string bytes = io::read_text(p);
    arr.push_back({{"path", p.string()}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  return arr;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& path, const std::string& command, const std::vector<std::string>& args,
                    const RunRecord& rec) {
  ordered_json m;
  m["tool"] = "seamless";
  m["version"] = SEAMLESS_VERSION;
  m["command"] = command;
  m["arguments"] = args;
  m["parameters"] = rec.parameters;
  m["inputs"] = file_entries(rec.inputs);
  m["outputs"] = file_entries(rec.outputs);
  m["created_utc"] = utc_now();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text(path, m.dump(2) + "\n");
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("seamless");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") {
    throw Error(ErrorCode::InvalidArgument, "unknown log level '" + level + "'");
  }
  spdlog::set_level(lvl);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marker-based georeferencing and fusion of aerial and ground imagery."};
  app.name("seamless");
  app.set_version_flag("--version", SEAMLESS_VERSION);
  app.config_formatter(std::make_shared<ConfigJSON>());
  app.set_config("--config", "", "JSON configuration; command-line values take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);

  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->envname("SEAMLESS_LOG_LEVEL")
      ->capture_default_str();
  std::string manifest;
  app.add_option("--manifest", manifest, "run manifest path (default: next to the main output)");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic scene with truth files");
  simulate->add_option("--out", sim.out_dir, "output directory")->required();
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_option("--pixel-sigma", sim.pixel_sigma, "image noise, px")->capture_default_str();
  simulate->add_option("--pose-position-sigma", sim.pose_position_sigma, "reported pose noise, m")->capture_default_str();
  simulate->add_option("--pose-angle-sigma", sim.pose_angle_sigma_deg, "reported attitude noise, deg")->capture_default_str();
  simulate->add_option("--sighting-sigma", sim.sighting_sigma, "ground sighting noise, m")->capture_default_str();
  simulate->add_option("--point-sigma", sim.point_sigma, "initial tie point noise, m")->capture_default_str();
  simulate->add_option("--tie-points", sim.tie_points)->capture_default_str();
  simulate->add_option("--stereo-width", sim.stereo_width)->capture_default_str();
  simulate->add_option("--stereo-height", sim.stereo_height)->capture_default_str();
  simulate->add_option("--baseline", sim.baseline, "stereo baseline, m")->capture_default_str();
  simulate->add_option("--background-depth", sim.background_depth)->capture_default_str();
  simulate->add_option("--foreground-depth", sim.foreground_depth)->capture_default_str();
  simulate->add_flag("--collinear-tags", sim.collinear_tags, "place the tags on a line");
  simulate->add_option("--crs", sim.crs)->capture_default_str();

  TriangulateArgs tri;
  auto* triangulate = app.add_subcommand("triangulate-tags", "Triangulate tag centres from aerial observations");
  triangulate->add_option("--observations", tri.observations)->required();
  triangulate->add_option("--poses", tri.poses)->required();
  triangulate->add_option("--intrinsics", tri.intrinsics)->required();
  triangulate->add_option("--out", tri.out, "tag file")->required();
  triangulate->add_option("--crs", tri.crs)->capture_default_str();
  triangulate->add_flag("!--keep-outliers", tri.reject_outliers, "disable ray outlier rejection");

  CoregisterArgs reg;
  auto* coregister = app.add_subcommand("coregister", "Register a local trajectory to the tag frame");
  coregister->add_option("--sightings", reg.sightings)->required();
  coregister->add_option("--tags", reg.tags)->required();
  coregister->add_option("--trajectory", reg.trajectory, "local trajectory")->required();
  coregister->add_option("--out-trajectory", reg.out_trajectory)->required();
  coregister->add_option("--out-transform", reg.out_transform)->required();
  coregister->add_flag("--estimate-scale", reg.estimate_scale);
  coregister->add_flag("!--no-robust", reg.robust, "keep every correspondence");

  BundleArgs ba;
  auto* bundle = app.add_subcommand("ba", "Bundle adjustment");
  bundle->add_option("--intrinsics", ba.intrinsics)->required();
  bundle->add_option("--poses", ba.poses)->required();
  bundle->add_option("--points", ba.points)->required();
  bundle->add_option("--measurements", ba.measurements)->required();
  bundle->add_option("--out-poses", ba.out_poses)->required();
  bundle->add_option("--out-points", ba.out_points)->required();
  bundle->add_option("--anchors", ba.anchors, "image ids whose poses stay fixed")->delimiter(',');
  bundle->add_flag("--fix-poses", ba.fix_poses);
  bundle->add_flag("--fix-points", ba.fix_points);
  bundle->add_flag("--refine-focal", ba.refine_focal);
  bundle->add_flag("--refine-principal-point", ba.refine_principal_point);
  bundle->add_flag("--refine-distortion", ba.refine_distortion);
  bundle->add_option("--max-iters", ba.max_iters)->capture_default_str();

  SgmArgs sg;
  auto* sgm = app.add_subcommand("sgm", "Dense disparity from a rectified pair");
  sgm->add_option("--left", sg.left)->required();
  sgm->add_option("--right", sg.right)->required();
  sgm->add_option("--out", sg.out, "disparity PFM")->required();
  sgm->add_option("--d-min", sg.params.d_min)->capture_default_str();
  sgm->add_option("--d-max", sg.params.d_max)->capture_default_str();
  sgm->add_option("--p1", sg.params.p1)->capture_default_str();
  sgm->add_option("--p2", sg.params.p2)->capture_default_str();
  sgm->add_option("--paths", sg.params.n_paths)->capture_default_str();
  sgm->add_option("--census-width", sg.params.census_width)->capture_default_str();
  sgm->add_option("--census-height", sg.params.census_height)->capture_default_str();
  sgm->add_option("--uniqueness", sg.params.uniqueness_ratio)->capture_default_str();
  sgm->add_option("--lr-max-diff", sg.params.lr_max_diff)->capture_default_str();
  sgm->add_flag("!--no-lr-check", sg.params.lr_check);
  sgm->add_option("--cloud", sg.cloud, "also write a PLY point cloud");
  sgm->add_option("--intrinsics", sg.intrinsics, "left camera, needed for --cloud");
  sgm->add_option("--baseline", sg.baseline, "m")->capture_default_str();
  sgm->add_option("--trajectory", sg.trajectory, "pose source for the cloud");
  sgm->add_option("--timestamp", sg.timestamp)->capture_default_str();
  sgm->add_option("--rgb", sg.rgb, "colour image for the cloud");

  FuseArgs fu;
  std::vector<double> origin;
  auto* fuse = app.add_subcommand("fuse", "Voxel-fuse point clouds");
  fuse->add_option("--inputs", fu.inputs, "PLY clouds")->required();
  fuse->add_option("--out", fu.out)->required();
  fuse->add_option("--voxel-size", fu.settings.voxel_size)->capture_default_str();
  fuse->add_option("--origin", origin, "grid origin x y z")->expected(3);
  fuse->add_option("--min-points", fu.settings.min_points)->capture_default_str();
  fuse->add_option("--min-rgb-fraction", fu.settings.min_rgb_fraction)->capture_default_str();
  fuse->add_option("--occlusion-threshold", fu.occlusion_threshold)->capture_default_str();
  fuse->add_option("--rgb", fu.rgb, "colour image");
  fuse->add_option("--rgb-intrinsics", fu.rgb_intrinsics);
  fuse->add_option("--rgb-trajectory", fu.rgb_trajectory);
  fuse->add_option("--rgb-timestamp", fu.rgb_timestamp)->capture_default_str();

  AssessArgs as;
  auto* assess = app.add_subcommand("assess", "Compare estimated tag positions with truth");
  assess->add_option("--estimated", as.estimated)->required();
  assess->add_option("--truth", as.truth)->required();
  assess->add_option("--out", as.out, "summary CSV")->required();
  assess->add_option("--pairs", as.pairs, "per-pair CSV");
  assess->add_option("--text", as.text, "text report file");

  std::vector<std::string> arguments(argv + 1, argv + argc);
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      if (code == 0) return 0;
      if (dynamic_cast<const CLI::FileError*>(&e) != nullptr) return static_cast<int>(ErrorCode::IoError);
      return static_cast<int>(ErrorCode::InvalidArgument);
    }
    setup_logging(log_level);
    if (!origin.empty()) fu.settings.origin = Vec3(origin[0], origin[1], origin[2]);

    RunRecord rec;
    std::string command;
    if (simulate->parsed()) {
      command = "simulate";
      rec = cmd_simulate(sim);
    } else if (triangulate->parsed()) {
      command = "triangulate-tags";
      rec = cmd_triangulate_tags(tri);
    } else if (coregister->parsed()) {
      command = "coregister";
      rec = cmd_coregister(reg);
    } else if (bundle->parsed()) {
      command = "ba";
      rec = cmd_ba(ba);
    } else if (sgm->parsed()) {
      command = "sgm";
      rec = cmd_sgm(sg);
    } else if (fuse->parsed()) {
      command = "fuse";
      rec = cmd_fuse(fu);
    } else {
      command = "assess";
      std::string text;
      rec = cmd_assess(as, &text);
      std::cout << text;
    }
    write_manifest(manifest.empty() ? rec.manifest : fs::path(manifest), command, arguments, rec);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::IoError);
  }
}
