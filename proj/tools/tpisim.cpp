// tpisim: command-line front end for scans, fits, figure datasets and the self-test suite.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tpi/analysis.hpp"
#include "tpi/coincidence.hpp"
#include "tpi/errors.hpp"
#include "tpi/event_sim.hpp"
#include "tpi/harness.hpp"
#include "tpi/rng.hpp"
#include "tpi/selftest.hpp"

namespace {

using namespace tpi;

struct Common {
  std::string config;
  std::string mode = "analytic";
  std::uint64_t seed = 1;
  std::string out;
  bool randomize_phase = false;
  std::optional<double> duration_s;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (default: bundled paper parameters)");
  cmd->add_option("--mode", c.mode, "analytic or montecarlo")
      ->check(CLI::IsMember({"analytic", "montecarlo"}));
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--out", c.out, "Output path (default: stdout)");
  cmd->add_flag("--randomize-phase", c.randomize_phase, "Average the fast fringe phases");
  cmd->add_option("--duration", c.duration_s, "Integration time per point in seconds");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig config_from(const Common& c) {
  return c.config.empty() ? parse_config(bundled_config_text("paper")) : load_config(c.config);
}

// Parses "a:b:c" into three numbers.
std::vector<double> triple(const std::string& text, const char* what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw InvalidArgument(std::string(what) + ": '" + part + "' is not a number");
    }
  }
  if (v.size() != 3) throw InvalidArgument(std::string(what) + " expects three values a:b:c");
  return v;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write '" + path + "'");
  os << text;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot read '" + path + "'");
  return is;
}

FitKind parse_fit_kind(const std::string& name) {
  for (FitKind k : {FitKind::spi, FitKind::tpi_cross, FitKind::tpi_self, FitKind::beat,
                    FitKind::envelope}) {
    if (name == fit_kind_name(k)) return k;
  }
  throw InvalidArgument("unknown fit kind '" + name + "'");
}

int run_scan_cmd(const Common& c, const std::string& range, const std::string& fine,
                 std::optional<double> lock_nm, const std::vector<std::string>& channels) {
  const auto cfg = config_from(c);
  ScanPlan plan;
  plan.mode = parse_scan_mode(c.mode);
  plan.master_seed = c.seed;
  plan.randomize_phase = c.randomize_phase;
  plan.threads = c.threads;
  if (c.duration_s) plan.duration_s = *c.duration_s;
  if (!range.empty()) {
    const auto r = triple(range, "--range");
    plan.range = {r[0], r[1], r[2]};
  }
  if (!fine.empty()) {
    const auto f = triple(fine, "--fine");
    plan.fine_window = FineWindow{f[0], f[1], f[2]};
  }
  plan.lock_wavelength_nm = lock_nm;
  if (!channels.empty()) {
    plan.channels.clear();
    for (const auto& ch : channels) plan.channels.push_back(parse_channel(ch));
  }
  std::ostringstream os;
  write_scan_csv(os, run_scan(plan, cfg));
  emit(c.out, os.str());
  return 0;
}

int run_fit_cmd(const Common& c, const std::string& input, const std::string& kind_name,
                const std::string& channel_name_arg, bool raw) {
  const auto cfg = config_from(c);
  auto is = open_input(input);
  const auto rows = read_scan_csv(is);
  const FitKind kind = parse_fit_kind(kind_name);
  Channel channel = Channel::singles1;
  if (!channel_name_arg.empty()) {
    channel = parse_channel(channel_name_arg);
  } else if (kind == FitKind::tpi_cross || kind == FitKind::beat) {
    channel = Channel::cross;
  } else if (kind == FitKind::tpi_self) {
    channel = Channel::self1;
  }
  const Arm arm = (channel == Channel::singles2 || channel == Channel::self2) ? Arm::two : Arm::one;
  const auto& filter = cfg.filters.filter(arm);
  const Series data =
      raw ? counts(rows, channel) : normalize(rows, channel, baseline_threshold_um(cfg.filters));
  const double lambda_um = filter.center_wavelength_nm() / 1e3;

  FitResult fit;
  switch (kind) {
    case FitKind::spi:
      fit = fit_oscillation(data, lambda_um);
      break;
    case FitKind::tpi_self:
      fit = fit_self_fringe(data, lambda_um);
      break;
    case FitKind::tpi_cross:
      fit = fit_cross_fringe(data, cfg.filters);
      break;
    case FitKind::beat:
      fit = fit_beat(data, cfg.filters.sigma12_um());
      break;
    case FitKind::envelope:
      fit = fit_envelope(data, (channel == Channel::self1 || channel == Channel::self2)
                                   ? EnvelopeKind::self_peak
                                   : EnvelopeKind::spi);
      break;
  }
  emit(c.out, fit_report_csv({fit}));
  std::cerr << fit_summary(fit) << '\n';
  return 0;
}

int run_reproduce_cmd(const Common& c, const std::string& figure_arg) {
  FigureOptions opt;
  opt.mode = parse_scan_mode(c.mode);
  opt.master_seed = c.seed;
  opt.threads = c.threads;
  if (c.duration_s) opt.duration_s = *c.duration_s;
  if (!c.config.empty()) opt.config = load_config(c.config);
  const Figure fig = parse_figure(figure_arg);
  const auto bundle = reproduce_figure(fig, opt);
  const std::string report = figure_report_csv(bundle);
  if (c.out.empty() || c.out == "-") {
    std::cout << report;
  } else {
    // --out names a directory holding one CSV per dataset plus the fit report.
    std::filesystem::create_directories(c.out);
    const std::string stem = (std::filesystem::path(c.out) / figure_name(fig)).string();
    for (const auto& d : bundle.datasets) {
      std::ostringstream os;
      write_scan_csv(os, d.rows);
      emit(stem + "_" + d.name + ".csv", os.str());
    }
    emit(stem + "_fits.csv", report);
  }
  for (const auto& lf : bundle.fits) std::cerr << lf.label << ": " << fit_summary(lf.fit) << '\n';
  for (const auto& chk : bundle.checks) std::cerr << chk.summary << '\n';
  for (const auto& n : bundle.notes) std::cerr << "note: " << n << '\n';
  for (const auto& f : bundle.failures) std::cerr << "fit failed: " << f << '\n';
  return bundle.failures.empty() ? 0 : exit_code_for(ErrorKind::fit);
}

int run_selftest_cmd(std::uint64_t seed, const std::vector<std::string>& only) {
  SelftestOptions opt;
  opt.seed = seed;
  const auto names = only.empty() ? selftest_property_names() : only;
  int failed = 0;
  for (const auto& name : names) {
    const auto r = run_property(name, opt);
    std::printf("%s %s (%.2f s): %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    failed += !r.pass;
  }
  std::printf("%d of %zu properties passed\n", static_cast<int>(names.size()) - failed,
              names.size());
  return failed == 0 ? 0 : exit_code_for(ErrorKind::invariant);
}

int run_events_cmd(const Common& c, double delta_x_um, const std::vector<int>& arms) {
  const auto cfg = config_from(c);
  const double duration = c.duration_s.value_or(1.0);
  std::vector<EventStream> streams;
  for (int a : arms) {
    const Arm arm = a == 1 ? Arm::one : Arm::two;
    const auto seed = derive_seed(c.seed, {kTagArm, static_cast<std::uint64_t>(a)});
    streams.push_back(
        apply_dead_time(generate_stream(arm, cfg, delta_x_um, duration, seed), cfg.dead_time_ns));
  }
  std::ostringstream os;
  write_event_dump(os, streams, c.seed);
  emit(c.out, os.str());
  return 0;
}

int run_count_cmd(const Common& c, const std::string& input, std::optional<double> window_ns,
                  std::optional<double> delay_ns) {
  const auto cfg = config_from(c);
  auto is = open_input(input);
  const auto dump = read_event_dump(is);
  const double w = window_ns.value_or(cfg.resolving_time_ns);
  const double d = delay_ns.value_or(cfg.self_delay_ns);
  std::ostringstream os;
  os << "channel,pairs,events_a,events_b,rate_cps,expected_accidentals\n";
  auto row = [&](const char* name, const CoincidenceResult& r, double acc) {
    os << name << ',' << r.pair_count << ',' << r.events_a << ',' << r.events_b << ','
       << r.rate_cps << ',' << acc << '\n';
    if (!r.warning.empty()) std::cerr << "warning: " << name << ": " << r.warning << '\n';
  };
  const EventStream* s1 = dump.find(Arm::one);
  const EventStream* s2 = dump.find(Arm::two);
  if (s1 && s2) row("cross", count_cross(*s1, *s2, w), expected_accidentals(*s1, *s2, w));
  if (s1) row("self1", count_self_delayed(*s1, d, w, cfg.dead_time_ns),
              expected_accidentals(*s1, *s1, w));
  if (s2) row("self2", count_self_delayed(*s2, d, w, cfg.dead_time_ns),
              expected_accidentals(*s2, *s2, w));
  emit(c.out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-photon interference simulator"};
  app.require_subcommand(1);

  Common scan_c, fit_c, repro_c, events_c, count_c;
  std::string range, fine, fit_in, fit_kind = "spi", fit_channel, figure, count_in, config_name;
  std::optional<double> lock_nm, window_ns, delay_ns;
  std::vector<std::string> channels, only;
  std::vector<int> arms{1, 2};
  double delta_x = 0.0;
  bool raw = false;
  std::uint64_t selftest_seed = 1;
  std::string check_path;

  auto* scan = app.add_subcommand("scan", "Scan the path difference and write scan CSV");
  add_common(scan, scan_c);
  scan->add_option("--range", range, "Coarse grid min:max:step in um");
  scan->add_option("--fine", fine, "Fine window center:half_width:step in um");
  scan->add_option("--lock-wavelength", lock_nm, "Snap coarse points to whole fringes of this wavelength (nm)");
  scan->add_option("--channels", channels, "Subset of singles1 singles2 cross self1 self2");

  auto* fit = app.add_subcommand("fit", "Fit a scan CSV channel and write a fit report");
  add_common(fit, fit_c);
  fit->add_option("--in", fit_in, "Scan CSV")->required();
  fit->add_option("--kind", fit_kind, "spi, tpi_cross, tpi_self, beat or envelope");
  fit->add_option("--channel", fit_channel, "Channel to fit (default follows --kind)");
  fit->add_flag("--raw", raw, "Fit raw counts instead of baseline-normalized values");

  auto* repro = app.add_subcommand("reproduce", "Regenerate a figure dataset with its fits");
  add_common(repro, repro_c);
  repro->add_option("--figure", figure, "3, 4 or 5")->required();

  auto* self = app.add_subcommand("selftest", "Run the invariant suite");
  self->add_option("--seed", selftest_seed, "Master seed");
  self->add_option("--property", only, "Run only the named properties");
  self->add_flag_callback("--list", [] {
    for (const auto& n : selftest_property_names()) std::cout << n << '\n';
    std::exit(0);
  }, "List property names");

  auto* events = app.add_subcommand("events", "Simulate detector streams and write an event dump");
  add_common(events, events_c);
  events->add_option("--delta-x", delta_x, "Path difference in um");
  events->add_option("--arms", arms, "Detectors to simulate")->check(CLI::IsMember({1, 2}));

  auto* count = app.add_subcommand("count", "Count coincidences in an event dump");
  add_common(count, count_c);
  count->add_option("--in", count_in, "Event dump")->required();
  count->add_option("--window", window_ns, "Coincidence window in ns (default resolving time)");
  count->add_option("--delay", delay_ns, "Self-coincidence delay in ns (default self delay)");

  auto* config = app.add_subcommand("config", "Print a bundled config or validate a file");
  config->add_option("--show", config_name, "Bundled config name (paper or paper_fig5)");
  config->add_option("--check", check_path, "Config file to validate and echo");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*scan) return run_scan_cmd(scan_c, range, fine, lock_nm, channels);
    if (*fit) return run_fit_cmd(fit_c, fit_in, fit_kind, fit_channel, raw);
    if (*repro) return run_reproduce_cmd(repro_c, figure);
    if (*self) return run_selftest_cmd(selftest_seed, only);
    if (*events) return run_events_cmd(events_c, delta_x, arms);
    if (*count) return run_count_cmd(count_c, count_in, window_ns, delay_ns);
    if (*config) {
      if (!check_path.empty()) {
        std::cout << format_config(load_config(check_path));
      } else {
        std::cout << bundled_config_text(config_name.empty() ? "paper" : config_name);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(ErrorKind::invariant);
  }
  return 0;
}
