#include "ccotdr/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ccotdr/version.hpp"

namespace ccotdr::config {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw InvalidArgument(path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> keys) {
  if (!j.is_object()) bad(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) known = true;
    if (!known) bad(path + "." + it.key(), "unknown field");
  }
}

double getd(const json& j, const std::string& path, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number()) bad(path + "." + key, "expected a number");
  return j[key].get<double>();
}

long geti(const json& j, const std::string& path, const char* key, long dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number_integer()) bad(path + "." + key, "expected an integer");
  return j[key].get<long>();
}

uint64_t getu(const json& j, const std::string& path, const char* key, uint64_t dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number_unsigned() && !j[key].is_number_integer())
    bad(path + "." + key, "expected an unsigned integer");
  return j[key].get<uint64_t>();
}

bool getb(const json& j, const std::string& path, const char* key, bool dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_boolean()) bad(path + "." + key, "expected a boolean");
  return j[key].get<bool>();
}

std::string gets(const json& j, const std::string& path, const char* key,
                 const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_string()) bad(path + "." + key, "expected a string");
  return j[key].get<std::string>();
}

// Bitmasks accept plain integers or hex strings ("0x221").
uint32_t get_mask(const json& j, const std::string& path, const char* key, uint32_t dflt) {
  if (!j.contains(key)) return dflt;
  if (j[key].is_number_integer()) return j[key].get<uint32_t>();
  if (j[key].is_string()) {
    try {
      return static_cast<uint32_t>(std::stoul(j[key].get<std::string>(), nullptr, 0));
    } catch (const std::exception&) {
      bad(path + "." + key, "cannot parse bitmask");
    }
  }
  bad(path + "." + key, "expected an integer or hex string");
}

waveform::ProbeSpec parse_probe(const json& j, const std::string& path) {
  check_keys(j, path, {"prbs_order", "polynomial", "prbs_seed", "symbol_rate_hz",
                       "sample_rate_hz", "zero_pad_samples"});
  waveform::ProbeSpec p;
  p.prbs.order = static_cast<int>(geti(j, path, "prbs_order", p.prbs.order));
  p.prbs.polynomial = get_mask(j, path, "polynomial", p.prbs.polynomial);
  p.prbs.seed = get_mask(j, path, "prbs_seed", p.prbs.seed);
  p.symbol_rate_hz = getd(j, path, "symbol_rate_hz", p.symbol_rate_hz);
  p.sample_rate_hz = getd(j, path, "sample_rate_hz", p.sample_rate_hz);
  p.zero_pad_samples = static_cast<int>(geti(j, path, "zero_pad_samples", p.zero_pad_samples));
  return p;
}

fibermodel::FiberLayout parse_layout(const json& j, const std::string& path) {
  check_keys(j, path, {"fiber_length_m", "group_index", "wavelength_m", "events",
                       "rayleigh", "heated"});
  fibermodel::FiberLayout fl = fibermodel::FiberLayout::default_layout();
  fl.fiber_length_m = getd(j, path, "fiber_length_m", fl.fiber_length_m);
  fl.group_index = getd(j, path, "group_index", fl.group_index);
  fl.wavelength_m = getd(j, path, "wavelength_m", fl.wavelength_m);
  if (j.contains("events")) {
    if (!j["events"].is_array()) bad(path + ".events", "expected an array");
    fl.events.clear();
    int i = 0;
    for (const auto& ej : j["events"]) {
      std::string epath = path + ".events[" + std::to_string(i++) + "]";
      check_keys(ej, epath, {"position_m", "type", "return_loss_db"});
      fibermodel::ReflectionEvent ev;
      ev.position_m = getd(ej, epath, "position_m", 0.0);
      std::string type = gets(ej, epath, "type", "pc");
      if (type == "pc")
        ev.type = fibermodel::EventType::PcConnector;
      else if (type == "apc")
        ev.type = fibermodel::EventType::ApcTermination;
      else
        bad(epath + ".type", "expected \"pc\" or \"apc\"");
      ev.return_loss_db = getd(ej, epath, "return_loss_db", ev.return_loss_db);
      fl.events.push_back(ev);
    }
  }
  if (j.contains("rayleigh")) {
    const auto& rj = j["rayleigh"];
    std::string rpath = path + ".rayleigh";
    check_keys(rj, rpath, {"cell_length_m", "mean_return_loss_db", "seed"});
    fl.rayleigh.cell_length_m = getd(rj, rpath, "cell_length_m", fl.rayleigh.cell_length_m);
    fl.rayleigh.mean_return_loss_db =
        getd(rj, rpath, "mean_return_loss_db", fl.rayleigh.mean_return_loss_db);
    fl.rayleigh.seed = getu(rj, rpath, "seed", fl.rayleigh.seed);
  }
  if (j.contains("heated")) {
    const auto& hj = j["heated"];
    std::string hpath = path + ".heated";
    check_keys(hj, hpath, {"start_m", "end_m"});
    fl.heated.start_m = getd(hj, hpath, "start_m", fl.heated.start_m);
    fl.heated.end_m = getd(hj, hpath, "end_m", fl.heated.end_m);
  }
  return fl;
}

fibermodel::ScenarioProfile parse_scenario(const json& j, const std::string& path) {
  check_keys(j, path,
             {"stages", "heat_slew_max_kps", "cool_slew_max_kps", "chamber_tau_heat_s",
              "chamber_tau_cool_s", "acoustic", "airflow", "thermal_time_constant_s",
              "phase_temp_coeff_rad_per_k"});
  fibermodel::ScenarioProfile sp = default_scenario();
  if (j.contains("stages")) {
    if (!j["stages"].is_array()) bad(path + ".stages", "expected an array");
    sp.stages.clear();
    int i = 0;
    for (const auto& sj : j["stages"]) {
      std::string spath = path + ".stages[" + std::to_string(i++) + "]";
      check_keys(sj, spath, {"duration_s", "setpoint_c", "fan_on"});
      fibermodel::Stage st;
      st.duration_s = getd(sj, spath, "duration_s", 0.0);
      st.setpoint_c = getd(sj, spath, "setpoint_c", 30.0);
      st.fan_on = getb(sj, spath, "fan_on", false);
      sp.stages.push_back(st);
    }
  }
  sp.heat_slew_max_kps = getd(j, path, "heat_slew_max_kps", sp.heat_slew_max_kps);
  sp.cool_slew_max_kps = getd(j, path, "cool_slew_max_kps", sp.cool_slew_max_kps);
  sp.chamber_tau_heat_s = getd(j, path, "chamber_tau_heat_s", sp.chamber_tau_heat_s);
  sp.chamber_tau_cool_s = getd(j, path, "chamber_tau_cool_s", sp.chamber_tau_cool_s);
  if (j.contains("acoustic")) {
    const auto& aj = j["acoustic"];
    std::string apath = path + ".acoustic";
    check_keys(aj, apath, {"enabled", "frequency_hz", "phase_amp_pp_rad"});
    sp.acoustic.enabled = getb(aj, apath, "enabled", sp.acoustic.enabled);
    sp.acoustic.frequency_hz = getd(aj, apath, "frequency_hz", sp.acoustic.frequency_hz);
    sp.acoustic.phase_amp_pp_rad =
        getd(aj, apath, "phase_amp_pp_rad", sp.acoustic.phase_amp_pp_rad);
  }
  if (j.contains("airflow")) {
    const auto& aj = j["airflow"];
    std::string apath = path + ".airflow";
    check_keys(aj, apath, {"bandwidth_hz", "rms_rad"});
    sp.airflow.bandwidth_hz = getd(aj, apath, "bandwidth_hz", sp.airflow.bandwidth_hz);
    sp.airflow.rms_rad = getd(aj, apath, "rms_rad", sp.airflow.rms_rad);
  }
  sp.thermal_time_constant_s =
      getd(j, path, "thermal_time_constant_s", sp.thermal_time_constant_s);
  sp.phase_temp_coeff_rad_per_k =
      getd(j, path, "phase_temp_coeff_rad_per_k", sp.phase_temp_coeff_rad_per_k);
  return sp;
}

channel::NoiseSpec parse_noise(const json& j, const std::string& path) {
  check_keys(j, path, {"laser_linewidth_hz", "receiver_snr_db"});
  channel::NoiseSpec ns;
  ns.laser_linewidth_hz = getd(j, path, "laser_linewidth_hz", ns.laser_linewidth_hz);
  if (j.contains("receiver_snr_db")) {
    if (j["receiver_snr_db"].is_null())
      ns.receiver_snr_db.reset();
    else if (j["receiver_snr_db"].is_number())
      ns.receiver_snr_db = j["receiver_snr_db"].get<double>();
    else
      bad(path + ".receiver_snr_db", "expected a number or null");
  }
  return ns;
}

AnalysisSpec parse_analysis(const json& j, const std::string& path) {
  check_keys(j, path, {"window_len_s", "report_rate_hz", "spectrum_window",
                       "spectrum_times_s", "tau_fit_min_s", "tau_fit_max_s"});
  AnalysisSpec as;
  as.window_len_s = getd(j, path, "window_len_s", as.window_len_s);
  as.report_rate_hz = getd(j, path, "report_rate_hz", as.report_rate_hz);
  as.spectrum_window = gets(j, path, "spectrum_window", as.spectrum_window);
  if (j.contains("spectrum_times_s")) {
    if (!j["spectrum_times_s"].is_array()) bad(path + ".spectrum_times_s", "expected an array");
    for (const auto& v : j["spectrum_times_s"]) {
      if (!v.is_number()) bad(path + ".spectrum_times_s", "expected numbers");
      as.spectrum_times_s.push_back(v.get<double>());
    }
  }
  as.tau_fit_min_s = getd(j, path, "tau_fit_min_s", as.tau_fit_min_s);
  as.tau_fit_max_s = getd(j, path, "tau_fit_max_s", as.tau_fit_max_s);
  return as;
}

}  // namespace

fibermodel::ScenarioProfile default_scenario() {
  fibermodel::ScenarioProfile sp;
  sp.stages = {{10.0, 30.0, false}};
  return sp;
}

channel::SimMode parse_mode(const std::string& s) {
  if (s == "fast") return channel::SimMode::Fast;
  if (s == "full") return channel::SimMode::Full;
  throw InvalidArgument("mode: expected \"fast\" or \"full\"");
}

channel::Polarization parse_polarization(const std::string& s) {
  if (s == "single") return channel::Polarization::Single;
  if (s == "dual") return channel::Polarization::Dual;
  throw InvalidArgument("polarization: expected \"single\" or \"dual\"");
}

analysis::WindowKind parse_window(const std::string& s) {
  if (s == "hann") return analysis::WindowKind::Hann;
  if (s == "rect") return analysis::WindowKind::Rect;
  throw InvalidArgument("analysis.spectrum_window: expected \"hann\" or \"rect\"");
}

RunConfig from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  check_keys(j, "config",
             {"version", "seed", "mode", "polarization", "shot_rate_hz", "probe",
              "layout", "scenario", "noise", "monitor", "analysis"});
  long version = geti(j, "config", "version", kConfigVersion);
  if (version != kConfigVersion)
    bad("config.version", "unsupported version " + std::to_string(version));

  RunConfig cfg;
  cfg.seed = getu(j, "config", "seed", cfg.seed);
  cfg.mode = gets(j, "config", "mode", cfg.mode);
  cfg.polarization = gets(j, "config", "polarization", cfg.polarization);
  cfg.shot_rate_hz = getd(j, "config", "shot_rate_hz", cfg.shot_rate_hz);
  if (j.contains("probe")) cfg.probe = parse_probe(j["probe"], "probe");
  if (j.contains("layout")) cfg.layout = parse_layout(j["layout"], "layout");
  if (j.contains("scenario")) cfg.scenario = parse_scenario(j["scenario"], "scenario");
  if (j.contains("noise")) cfg.noise = parse_noise(j["noise"], "noise");
  if (j.contains("monitor")) {
    check_keys(j["monitor"], "monitor", {"position_a_m", "position_b_m"});
    cfg.monitor.position_a_m = getd(j["monitor"], "monitor", "position_a_m", 39.0);
    cfg.monitor.position_b_m = getd(j["monitor"], "monitor", "position_b_m", 234.0);
  }
  if (j.contains("analysis")) cfg.analysis = parse_analysis(j["analysis"], "analysis");
  return cfg;
}

std::string to_json_string(const RunConfig& cfg) {
  json j;
  j["version"] = kConfigVersion;
  j["seed"] = cfg.seed;
  j["mode"] = cfg.mode;
  j["polarization"] = cfg.polarization;
  j["shot_rate_hz"] = cfg.shot_rate_hz;

  json probe;
  probe["prbs_order"] = cfg.probe.prbs.order;
  probe["polynomial"] = cfg.probe.prbs.polynomial;
  probe["prbs_seed"] = cfg.probe.prbs.seed;
  probe["symbol_rate_hz"] = cfg.probe.symbol_rate_hz;
  probe["sample_rate_hz"] = cfg.probe.sample_rate_hz;
  probe["zero_pad_samples"] = cfg.probe.zero_pad_samples;
  j["probe"] = probe;

  json layout;
  layout["fiber_length_m"] = cfg.layout.fiber_length_m;
  layout["group_index"] = cfg.layout.group_index;
  layout["wavelength_m"] = cfg.layout.wavelength_m;
  layout["events"] = json::array();
  for (const auto& ev : cfg.layout.events) {
    json ej;
    ej["position_m"] = ev.position_m;
    ej["type"] = ev.type == fibermodel::EventType::PcConnector ? "pc" : "apc";
    ej["return_loss_db"] = ev.return_loss_db;
    layout["events"].push_back(ej);
  }
  layout["rayleigh"] = {{"cell_length_m", cfg.layout.rayleigh.cell_length_m},
                        {"mean_return_loss_db", cfg.layout.rayleigh.mean_return_loss_db},
                        {"seed", cfg.layout.rayleigh.seed}};
  layout["heated"] = {{"start_m", cfg.layout.heated.start_m},
                      {"end_m", cfg.layout.heated.end_m}};
  j["layout"] = layout;

  json scenario;
  scenario["stages"] = json::array();
  for (const auto& st : cfg.scenario.stages) {
    scenario["stages"].push_back({{"duration_s", st.duration_s},
                                  {"setpoint_c", st.setpoint_c},
                                  {"fan_on", st.fan_on}});
  }
  scenario["heat_slew_max_kps"] = cfg.scenario.heat_slew_max_kps;
  scenario["cool_slew_max_kps"] = cfg.scenario.cool_slew_max_kps;
  scenario["chamber_tau_heat_s"] = cfg.scenario.chamber_tau_heat_s;
  scenario["chamber_tau_cool_s"] = cfg.scenario.chamber_tau_cool_s;
  scenario["acoustic"] = {{"enabled", cfg.scenario.acoustic.enabled},
                          {"frequency_hz", cfg.scenario.acoustic.frequency_hz},
                          {"phase_amp_pp_rad", cfg.scenario.acoustic.phase_amp_pp_rad}};
  scenario["airflow"] = {{"bandwidth_hz", cfg.scenario.airflow.bandwidth_hz},
                         {"rms_rad", cfg.scenario.airflow.rms_rad}};
  scenario["thermal_time_constant_s"] = cfg.scenario.thermal_time_constant_s;
  scenario["phase_temp_coeff_rad_per_k"] = cfg.scenario.phase_temp_coeff_rad_per_k;
  j["scenario"] = scenario;

  json noise;
  noise["laser_linewidth_hz"] = cfg.noise.laser_linewidth_hz;
  if (cfg.noise.receiver_snr_db)
    noise["receiver_snr_db"] = *cfg.noise.receiver_snr_db;
  else
    noise["receiver_snr_db"] = nullptr;
  j["noise"] = noise;

  j["monitor"] = {{"position_a_m", cfg.monitor.position_a_m},
                  {"position_b_m", cfg.monitor.position_b_m}};

  json analysis;
  analysis["window_len_s"] = cfg.analysis.window_len_s;
  analysis["report_rate_hz"] = cfg.analysis.report_rate_hz;
  analysis["spectrum_window"] = cfg.analysis.spectrum_window;
  analysis["spectrum_times_s"] = cfg.analysis.spectrum_times_s;
  analysis["tau_fit_min_s"] = cfg.analysis.tau_fit_min_s;
  analysis["tau_fit_max_s"] = cfg.analysis.tau_fit_max_s;
  j["analysis"] = analysis;

  return j.dump(2) + "\n";
}

RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void save(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json_string(cfg);
}

void validate(const RunConfig& cfg) {
  auto frame = waveform::build_probe_frame(cfg.probe);
  cfg.layout.validate();
  cfg.scenario.validate();
  channel::SimMode mode = parse_mode(cfg.mode);
  channel::Polarization pol = parse_polarization(cfg.polarization);
  parse_window(cfg.analysis.spectrum_window);

  if (cfg.shot_rate_hz <= 0) throw InvalidArgument("shot_rate_hz: must be positive");
  if (mode == channel::SimMode::Full &&
      cfg.shot_rate_hz * frame.frame_period_s() > 1.0 + 1e-12)
    throw InvalidArgument("shot_rate_hz: exceeds 1/frame_period in full mode");

  int farthest = distance_to_index(cfg.layout.fiber_length_m, cfg.layout.group_index,
                                   cfg.probe.sample_rate_hz);
  if (cfg.probe.zero_pad_samples < farthest)
    throw InvalidArgument("probe.zero_pad_samples: must cover the farthest tap (" +
                          std::to_string(farthest) + " samples)");
  if (cfg.noise.laser_linewidth_hz < 0)
    throw InvalidArgument("noise.laser_linewidth_hz: must be non-negative");

  channel::SimulationSetup setup;
  setup.frame = std::move(frame);
  setup.layout = cfg.layout;
  setup.scenario = cfg.scenario;
  setup.polarization = pol;
  setup.monitor_a_m = cfg.monitor.position_a_m;
  setup.monitor_b_m = cfg.monitor.position_b_m;
  channel::monitored_pair(setup);  // throws with monitor.* field names

  if (cfg.analysis.window_len_s * cfg.shot_rate_hz < 16.0)
    throw InvalidArgument("analysis.window_len_s: window must contain at least 16 samples");
  if (cfg.analysis.report_rate_hz < 0)
    throw InvalidArgument("analysis.report_rate_hz: must be non-negative");
  if (cfg.analysis.tau_fit_min_s <= 0 ||
      cfg.analysis.tau_fit_max_s <= cfg.analysis.tau_fit_min_s)
    throw InvalidArgument("analysis.tau_fit_min_s: need 0 < min < max");
}

}  // namespace ccotdr::config
