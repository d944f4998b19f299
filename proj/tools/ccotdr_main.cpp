#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "ccotdr/common.hpp"
#include "ccotdr/config.hpp"
#include "ccotdr/pipeline.hpp"
#include "ccotdr/version.hpp"

namespace pipeline = ccotdr::pipeline;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string outdir = "out";
  uint64_t seed = 0;
  std::string mode;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts* o, bool with_mode) {
  cmd->add_option("--config", o->config_path, "configuration JSON")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o->outdir, "output directory")->envname("CCOTDR_OUT");
  cmd->add_option("--seed", o->seed, "override the run seed")->envname("CCOTDR_SEED");
  if (with_mode)
    cmd->add_option("--mode", o->mode, "fast | full")->envname("CCOTDR_MODE");
  cmd->add_option("--threads", o->threads, "worker threads (0 = all cores)")
      ->envname("CCOTDR_THREADS");
}

ccotdr::config::RunConfig load_config(const CLI::App* cmd, const CommonOpts& o) {
  ccotdr::config::RunConfig cfg;
  if (!o.config_path.empty()) cfg = ccotdr::config::load(o.config_path);
  if (cmd->count("--seed") > 0) cfg.seed = o.seed;
  const CLI::Option* mode = cmd->get_option_no_throw("--mode");
  if (mode && mode->count() > 0) cfg.mode = o.mode;
  return cfg;
}

int effective_threads(int threads) {
  if (threads > 0) return threads;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coherent-correlation OTDR testbed simulator"};
  app.set_version_flag("--version", std::string(ccotdr::kVersion));
  app.require_subcommand(1);

  CommonOpts sim_o, fp_o, an_o, cal_o, rep_o;
  bool phasor_csv = false;
  int fp_shots = 100;
  double fp_prominence = 15.0;
  int fp_guard = 3;
  std::string archive_path, phase_csv, reference_csv;
  double tau_min = 5.0, tau_max = 300.0;
  std::string preset = "paper-default";

  CLI::App* sim = app.add_subcommand("simulate", "run a scenario and archive the shots");
  add_common(sim, &sim_o, true);
  sim->add_flag("--phasor-csv", phasor_csv, "also export fast-mode phasors as CSV");

  CLI::App* fp = app.add_subcommand(
      "fingerprint", "static averaged reflectogram with event detection");
  add_common(fp, &fp_o, false);
  fp->add_option("--shots", fp_shots, "shots to average");
  fp->add_option("--prominence", fp_prominence, "event threshold over the median [dB]");
  fp->add_option("--guard", fp_guard, "minimum event separation [bins]");

  CLI::App* an = app.add_subcommand("analyze", "phase, slopes, spectra, temperature");
  add_common(an, &an_o, true);
  an->add_option("--in", archive_path, "shot archive")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* cal = app.add_subcommand("calibrate",
                                     "phase/temperature coefficient from CSV exports");
  cal->add_option("--phase", phase_csv, "phase CSV (t_s,dphi_rad)")
      ->required()
      ->check(CLI::ExistingFile);
  cal->add_option("--reference", reference_csv, "reference temperature CSV")
      ->required()
      ->check(CLI::ExistingFile);
  cal->add_option("--out", cal_o.outdir, "output directory")->envname("CCOTDR_OUT");
  cal->add_option("--tau-min", tau_min, "lag search lower bound [s]");
  cal->add_option("--tau-max", tau_max, "lag search upper bound [s]");

  CLI::App* rep = app.add_subcommand("reproduce", "run a named preset and check its numbers");
  rep->add_option("--preset", preset, "paper-default | calibration | tone-only");
  rep->add_option("--out", rep_o.outdir, "output directory")->envname("CCOTDR_OUT");
  rep->add_option("--threads", rep_o.threads, "worker threads (0 = all cores)")
      ->envname("CCOTDR_THREADS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      pipeline::cmd_simulate(load_config(sim, sim_o), sim_o.outdir,
                             effective_threads(sim_o.threads), phasor_csv);
    } else if (fp->parsed()) {
      pipeline::cmd_fingerprint(load_config(fp, fp_o), fp_o.outdir, fp_shots,
                                fp_prominence, fp_guard, effective_threads(fp_o.threads));
    } else if (an->parsed()) {
      pipeline::cmd_analyze(load_config(an, an_o), archive_path, an_o.outdir,
                            effective_threads(an_o.threads));
    } else if (cal->parsed()) {
      pipeline::cmd_calibrate(phase_csv, reference_csv, cal_o.outdir, tau_min, tau_max);
    } else if (rep->parsed()) {
      if (!pipeline::cmd_reproduce(preset, rep_o.outdir, effective_threads(rep_o.threads)))
        return 3;
    }
  } catch (const ccotdr::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
