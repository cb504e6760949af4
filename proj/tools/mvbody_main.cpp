#include "mvbody/commands.hpp"
#include "mvbody/serialize.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <set>
#include <string>

namespace {

using mvb::config_error;

nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(mvb::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config file: parse error: " + std::string(e.what()));
  }
  if (!j.is_object()) throw config_error("config file: expected a JSON object");
  return j;
}

void check_known_keys(const nlohmann::json& cfg,
                      const std::set<std::string>& allowed,
                      const std::string& command) {
  for (const auto& item : cfg.items()) {
    if (!allowed.count(item.key()))
      throw config_error("config file: unknown key '" + item.key() +
                         "' for command '" + command + "'");
  }
}

const std::set<std::string> kSynthKeys = {
    "n_shapes",        "poses_per_shape",   "n_views",
    "noise_sigma_px",  "occlusion_rate",    "min_visible_per_view",
    "max_pose_angle_rad", "pose_file",      "epsilon_margin_m",
    "seed",            "split_fraction",    "base_scale_px_per_m",
    "scale_jitter_lo", "scale_jitter_hi",   "translation_jitter_px",
    "export_meshes"};

const std::set<std::string> kFitKeys = {
    "stages",        "lambda2d",        "lambda3d",
    "lambda_smpl",   "corrector",       "damping",
    "huber_delta_px", "max_inner_iters", "start_view_random",
    "start_view_index", "start_view_seed", "convergence_tol",
    "gradient_lr",   "pad_to_views"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvbody: multi-view body reconstruction toolkit (synthetic "
               "benchmark generator, corrective-update fitter, evaluation)"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir;
  auto* opt_config =
      app.add_option("--config", config_path, "JSON run configuration file");
  auto* opt_seed = app.add_option("--seed", seed, "master seed override");
  auto* opt_jobs = app.add_option("--jobs", jobs, "parallel worker count");
  auto* opt_out = app.add_option("--out", out_dir, "output directory or file");
  (void)opt_config;

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  int gen_shapes = 0, gen_poses = 0, gen_views = 0, gen_vt = 0;
  double gen_noise = 0, gen_occ = 0, gen_angle_deg = 0, gen_eps = 0,
         gen_split = 0, gen_base_scale = 0;
  bool gen_meshes = false;
  std::string gen_template;
  auto* o_shapes = gen->add_option("--n-shapes", gen_shapes, "number of sampled shapes");
  auto* o_poses = gen->add_option("--poses-per-shape", gen_poses, "poses per shape");
  auto* o_views = gen->add_option("--n-views", gen_views, "views per instance");
  auto* o_noise = gen->add_option("--noise", gen_noise, "2D noise sigma, pixels");
  auto* o_occ = gen->add_option("--occlusion", gen_occ, "per-joint occlusion rate");
  auto* o_angle = gen->add_option("--max-angle-deg", gen_angle_deg,
                                  "procedural pose bound per axis, degrees");
  auto* o_eps = gen->add_option("--epsilon", gen_eps, "capsule clearance margin, meters");
  auto* o_split = gen->add_option("--split-fraction", gen_split, "train shape fraction");
  auto* o_base = gen->add_option("--base-scale", gen_base_scale,
                                 "camera base scale, pixels per meter");
  auto* o_meshes = gen->add_flag("--export-meshes", gen_meshes,
                                 "store ground-truth mesh vertices per instance");
  auto* o_gtmpl = gen->add_option("--template", gen_template, "body template file");
  auto* o_gvt = gen->add_option("--vertex-target", gen_vt,
                                "mini template vertex target");

  // fit
  auto* fit = app.add_subcommand("fit", "fit a dataset split");
  std::string fit_data, fit_split, fit_corrector;
  int fit_views = 0, fit_stages = 0, fit_inner = 0, fit_start = 0;
  double fit_l2d = 0, fit_l3d = 0, fit_lsmpl = 0, fit_damping = 0;
  auto* o_fdata = fit->add_option("--data", fit_data, "dataset directory")
                      ->required();
  auto* o_fsplit = fit->add_option("--split", fit_split, "test|train|all");
  auto* o_fviews = fit->add_option("--views", fit_views,
                                   "use only the first N views (padded below 4)");
  auto* o_fstages = fit->add_option("--stages", fit_stages, "schedule stage count");
  auto* o_fcorr = fit->add_option("--corrector", fit_corrector,
                                  "gauss_newton|gradient");
  auto* o_finner = fit->add_option("--max-inner-iters", fit_inner,
                                   "corrector iterations per block");
  auto* o_fl2d = fit->add_option("--lambda2d", fit_l2d, "2D loss weight");
  auto* o_fl3d = fit->add_option("--lambda3d", fit_l3d, "3D loss weight");
  auto* o_flsmpl = fit->add_option("--lambda-smpl", fit_lsmpl,
                                   "parameter supervision weight");
  auto* o_fdamp = fit->add_option("--damping", fit_damping, "initial damping");
  auto* o_fstart = fit->add_option("--start-view", fit_start,
                                   "fixed start view index (default: random)");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate fit reports against ground truth");
  std::string eval_data, eval_fits;
  bool eval_mesh = false;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--fits", eval_fits, "fit report directory")->required();
  eval->add_flag("--with-mesh", eval_mesh,
                 "also compute Hausdorff and tape measurements");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck",
                                  "verify analytic Jacobians against finite differences");
  int grad_draws = 100, grad_vt = 600;
  double grad_step = 1e-6, grad_tol = 1e-5;
  bool grad_fault = false;
  grad->add_option("--draws", grad_draws, "random parameter draws");
  grad->add_option("--step", grad_step, "central difference step");
  grad->add_option("--tolerance", grad_tol, "max relative error allowed");
  grad->add_option("--vertex-target", grad_vt, "mini template vertex target");
  grad->add_flag("--inject-jacobian-fault", grad_fault,
                 "negative control: corrupt one Jacobian entry");

  // export
  auto* exp = app.add_subcommand("export", "skin parameters and write a mesh file");
  std::string exp_template, exp_report;
  int exp_vt = 0;
  auto* o_etmpl = exp->add_option("--template", exp_template, "body template file");
  auto* o_ereport = exp->add_option("--report", exp_report,
                                    "fit report (or body params) JSON");
  auto* o_evt = exp->add_option("--vertex-target", exp_vt,
                                "mini template vertex target");

  try {
    app.parse(argc, argv);

    if (*gen) {
      auto cfg = load_config_file(config_path);
      auto allowed = kSynthKeys;
      allowed.insert({"template", "vertex_target", "out", "jobs"});
      check_known_keys(cfg, allowed, "gen");
      mvb::GenOptions o;
      o.synth = mvb::synth_config_from_json(cfg);
      if (cfg.contains("template"))
        o.template_path = cfg.at("template").get<std::string>();
      if (cfg.contains("vertex_target"))
        o.mini.vertex_target = cfg.at("vertex_target").get<int>();
      if (cfg.contains("out")) o.out_dir = cfg.at("out").get<std::string>();
      if (cfg.contains("jobs")) o.jobs = cfg.at("jobs").get<int>();
      if (o_shapes->count()) o.synth.n_shapes = gen_shapes;
      if (o_poses->count()) o.synth.poses_per_shape = gen_poses;
      if (o_views->count()) o.synth.n_views = gen_views;
      if (o_noise->count()) o.synth.noise_sigma_px = gen_noise;
      if (o_occ->count()) o.synth.occlusion_rate = gen_occ;
      if (o_angle->count())
        o.synth.max_pose_angle_rad = gen_angle_deg * M_PI / 180.0;
      if (o_eps->count()) o.synth.epsilon_margin_m = gen_eps;
      if (o_split->count()) o.synth.split_fraction = gen_split;
      if (o_base->count()) o.synth.base_scale_px_per_m = gen_base_scale;
      if (o_meshes->count()) o.synth.export_meshes = gen_meshes;
      if (o_gtmpl->count()) o.template_path = gen_template;
      if (o_gvt->count()) o.mini.vertex_target = gen_vt;
      if (opt_seed->count()) o.synth.seed = seed;
      if (opt_jobs->count()) o.jobs = jobs;
      if (opt_out->count()) o.out_dir = out_dir;
      if (o.out_dir.empty()) throw config_error("gen: --out is required");
      o.synth.validate();
      return mvb::cmd_gen(o);
    }

    if (*fit) {
      auto cfg = load_config_file(config_path);
      auto allowed = kFitKeys;
      allowed.insert({"data", "out", "split", "views", "jobs"});
      check_known_keys(cfg, allowed, "fit");
      mvb::FitOptions o;
      o.fit = mvb::fit_config_from_json(cfg);
      if (cfg.contains("data")) o.data_dir = cfg.at("data").get<std::string>();
      if (cfg.contains("out")) o.out_dir = cfg.at("out").get<std::string>();
      if (cfg.contains("split")) o.split = cfg.at("split").get<std::string>();
      if (cfg.contains("views")) o.views = cfg.at("views").get<int>();
      if (cfg.contains("jobs")) o.jobs = cfg.at("jobs").get<int>();
      if (o_fdata->count()) o.data_dir = fit_data;
      if (o_fsplit->count()) o.split = fit_split;
      if (o_fviews->count()) o.views = fit_views;
      if (o_fstages->count()) o.fit.stages = fit_stages;
      if (o_fcorr->count()) {
        if (fit_corrector == "gauss_newton")
          o.fit.corrector = mvb::CorrectorKind::gauss_newton;
        else if (fit_corrector == "gradient")
          o.fit.corrector = mvb::CorrectorKind::gradient;
        else
          throw config_error("fit: unknown corrector '" + fit_corrector + "'");
      }
      if (o_finner->count()) o.fit.max_inner_iters = fit_inner;
      if (o_fl2d->count()) o.fit.lambda2d = fit_l2d;
      if (o_fl3d->count()) o.fit.lambda3d = fit_l3d;
      if (o_flsmpl->count()) o.fit.lambda_smpl = fit_lsmpl;
      if (o_fdamp->count()) o.fit.damping = fit_damping;
      if (o_fstart->count()) {
        o.fit.start_view.random = false;
        o.fit.start_view.fixed_index = fit_start;
      }
      if (opt_seed->count()) o.fit.start_view.seed = seed;
      if (opt_jobs->count()) o.jobs = jobs;
      if (opt_out->count()) o.out_dir = out_dir;
      if (o.data_dir.empty()) throw config_error("fit: --data is required");
      if (o.out_dir.empty()) throw config_error("fit: --out is required");
      if (o.fit.stages < 1) throw config_error("fit: stages must be positive");
      if (o.views < 0) throw config_error("fit: --views must be nonnegative");
      return mvb::cmd_fit(o);
    }

    if (*eval) {
      auto cfg = load_config_file(config_path);
      check_known_keys(cfg, {"data", "fits", "out", "with_mesh"}, "eval");
      mvb::EvalOptions o;
      if (cfg.contains("data")) o.data_dir = cfg.at("data").get<std::string>();
      if (cfg.contains("fits")) o.fits_dir = cfg.at("fits").get<std::string>();
      if (cfg.contains("out"))
        o.out_path = std::filesystem::path(cfg.at("out").get<std::string>());
      if (cfg.contains("with_mesh")) o.with_mesh = cfg.at("with_mesh").get<bool>();
      if (!eval_data.empty()) o.data_dir = eval_data;
      if (!eval_fits.empty()) o.fits_dir = eval_fits;
      if (eval_mesh) o.with_mesh = true;
      if (opt_out->count()) o.out_path = std::filesystem::path(out_dir);
      return mvb::cmd_eval(o);
    }

    if (*grad) {
      auto cfg = load_config_file(config_path);
      check_known_keys(cfg, {"seed", "draws", "step", "tolerance", "vertex_target"},
                       "gradcheck");
      mvb::GradcheckOptions o;
      if (cfg.contains("seed")) o.seed = cfg.at("seed").get<std::uint64_t>();
      if (cfg.contains("draws")) o.draws = cfg.at("draws").get<int>();
      if (cfg.contains("step")) o.step = cfg.at("step").get<double>();
      if (cfg.contains("tolerance")) o.tolerance = cfg.at("tolerance").get<double>();
      if (cfg.contains("vertex_target"))
        o.vertex_target = cfg.at("vertex_target").get<int>();
      if (grad->count("--draws")) o.draws = grad_draws;
      if (grad->count("--step")) o.step = grad_step;
      if (grad->count("--tolerance")) o.tolerance = grad_tol;
      if (grad->count("--vertex-target")) o.vertex_target = grad_vt;
      o.inject_fault = grad_fault;
      if (opt_seed->count()) o.seed = seed;
      if (o.draws < 1) throw config_error("gradcheck: draws must be positive");
      return mvb::cmd_gradcheck(o);
    }

    if (*exp) {
      auto cfg = load_config_file(config_path);
      check_known_keys(cfg, {"template", "vertex_target", "report", "out"},
                       "export");
      mvb::ExportOptions o;
      if (cfg.contains("template"))
        o.template_path = cfg.at("template").get<std::string>();
      if (cfg.contains("vertex_target"))
        o.mini.vertex_target = cfg.at("vertex_target").get<int>();
      if (cfg.contains("report"))
        o.report_path = std::filesystem::path(cfg.at("report").get<std::string>());
      if (cfg.contains("out")) o.out_path = cfg.at("out").get<std::string>();
      if (o_etmpl->count()) o.template_path = exp_template;
      if (o_ereport->count()) o.report_path = std::filesystem::path(exp_report);
      if (o_evt->count()) o.mini.vertex_target = exp_vt;
      if (opt_out->count()) o.out_path = out_dir;
      if (o.out_path.empty()) throw config_error("export: --out is required");
      return mvb::cmd_export(o);
    }

    throw config_error("no command selected");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mvb::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
