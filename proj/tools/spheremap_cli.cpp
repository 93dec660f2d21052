// spheremap command line: world generation, map building, planning, LTV
// export and the benchmark scenarios.
//
// Exit codes: 0 success, 1 no path, 2 config or parse error, 3 internal error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spheremap/bench/scenarios.hpp"
#include "spheremap/invariants.hpp"
#include "spheremap/ltv_map.hpp"
#include "spheremap/snapshot.hpp"

using namespace spheremap;
using namespace spheremap::bench;

namespace {

constexpr int kOk = 0, kNoPath = 1, kConfig = 2, kInternal = 3;

struct NoPath : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a params file can set. Keys are routed to the world spec, the
/// build parameters and the cost model; r_min feeds both of the latter.
struct Settings {
  WorldSpec world;
  BuildParams build = bench_build_params();
  PlannerParams cost;
  double tour_step = 2.0;
  RevealMode reveal = RevealMode::raycast;
  RevealOptions sensor;
  std::size_t goals = 11;
  std::size_t checkpoint_every = 10;
  int grid_factor = 2;
  RrtOptions rrt;

  void apply(const std::string& key, const std::string& value) {
    bool used = false;
    if (key == "r_min") {
      build.r_min = cost.r_min = parse_double(key, value);
      return;
    }
    used = apply_param(world, key, value) || apply_param(build, key, value) || apply_param(cost, key, value);
    if (used) return;
    if (key == "tour_step") tour_step = parse_double(key, value);
    else if (key == "reveal") {
      if (value == "raycast") reveal = RevealMode::raycast;
      else if (value == "full") reveal = RevealMode::full;
      else throw ConfigError("reveal must be raycast or full");
    } else if (key == "sensor_range") sensor.range = parse_double(key, value);
    else if (key == "sensor_step_deg") sensor.step_deg = parse_double(key, value);
    else if (key == "sensor_elevation_deg") sensor.elevation_limit_deg = parse_double(key, value);
    else if (key == "goals") goals = std::size_t(parse_int(key, value));
    else if (key == "checkpoint_every") checkpoint_every = std::size_t(parse_int(key, value));
    else if (key == "grid_factor") grid_factor = int(parse_int(key, value));
    else if (key == "rrt_timeout") rrt.timeout = parse_double(key, value);
    else if (key == "rrt_step") rrt.step = parse_double(key, value);
    else if (key == "rrt_rewire_radius") rrt.rewire_radius = parse_double(key, value);
    else if (key == "rrt_refine_iterations") rrt.refine_iterations = std::size_t(parse_int(key, value));
    else throw ConfigError("unknown param '" + key + "'");
  }

  void validate() const {
    world.validate();
    build.validate();
    cost.validate();
    if (!(tour_step > 0.0)) throw ConfigError("tour_step must be > 0");
    if (!(sensor.range > 0.0 && sensor.step_deg > 0.0)) throw ConfigError("sensor range and step must be > 0");
    if (grid_factor < 1) throw ConfigError("grid_factor must be >= 1");
  }
};

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

Vec3 parse_point(const std::string& flag, const std::string& text) {
  std::vector<double> v;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) v.push_back(parse_double(flag, part));
  if (v.size() != 3) throw ConfigError(flag + " expects x,y,z");
  return {v[0], v[1], v[2]};
}

/// Options every subcommand takes.
struct Common {
  std::optional<std::uint32_t> seed;
  std::string params;
  std::string out;

  void attach(CLI::App* app, bool out_required) {
    app->add_option("--seed", seed, "seed for world generation, sampling and RRT*");
    app->add_option("--params", params, "key=value parameter file");
    auto* o = app->add_option("--out", out, "output file");
    if (out_required) o->required();
  }

  Settings settings() const {
    Settings s;
    if (!params.empty()) {
      const std::vector<std::uint8_t> bytes = read_bytes(params);
      for (const auto& [k, v] : parse_key_values(std::string(bytes.begin(), bytes.end()))) s.apply(k, v);
    }
    if (seed) {
      s.world.seed = *seed;
      s.build.seed = *seed;
      s.rrt.seed = *seed;
    }
    s.validate();
    return s;
  }
};

// ------------------------------------------------------------------ commands

int cmd_gen(const Common& c) {
  const Settings s = c.settings();
  const World w = generate_world(s.world);
  write_bytes(c.out, save_grid(w.grid));
  const auto [largest, total] = largest_free_component(w.grid);
  std::cout << "world " << to_string(w.spec.kind) << " dims " << w.grid.dims().x << "x" << w.grid.dims().y << "x"
            << w.grid.dims().z << " free " << total << " largest_component " << largest << " landmarks "
            << w.landmarks.size() << "\n";
  std::cout << "start " << w.start.transpose() << "\ngoal " << w.goal.transpose() << "\n";
  return kOk;
}

int cmd_build(const Common& c, const std::string& world_path, const std::string& known_out) {
  const Settings s = c.settings();
  MissionOptions opt;
  opt.sensor = s.sensor;
  MissionResult r{SphereMap(s.build, s.cost), OccupancyGrid(), {}};
  if (!world_path.empty()) {
    // A bare grid has no skeleton to tour, so sweep it fully revealed.
    const OccupancyGrid grid = load_grid(read_bytes(world_path));
    opt.reveal = RevealMode::full;
    r = run_mission(grid, sweep_positions(grid, s.build.cube_side, 2), s.build, s.cost, opt);
  } else {
    const World w = generate_world(s.world);
    if (s.reveal == RevealMode::full) {
      r = sweep_build(w, s.build, s.cost, opt);
    } else {
      r = run_mission(w.grid, make_tour(w, s.tour_step), s.build, s.cost, opt);
    }
  }
  write_bytes(c.out, encode_snapshot(r.map));
  if (!known_out.empty()) write_bytes(known_out, save_grid(r.known));
  double total = 0.0;
  for (const IterationRecord& it : r.iterations) total += it.report.t_total;
  std::cout << "iterations " << r.iterations.size() << " nodes " << r.map.node_count() << " edges "
            << r.map.edge_count() << " segments " << r.map.segment_count() << " portals " << r.map.portals().size()
            << " update_ms " << fmt(total * 1e3, 1) << "\n";
  return kOk;
}

std::optional<PlanMode> parse_mode(const std::string& m) {
  for (PlanMode mode : all_modes()) {
    if (m == to_string(mode)) return mode;
  }
  return std::nullopt;
}

int cmd_plan(const Common& c, const std::string& map_path, const std::string& world_path, const std::string& from,
             const std::string& to, const std::string& mode_name) {
  const Settings s = c.settings();
  const auto mode = parse_mode(mode_name);
  if (!mode) throw ConfigError("unknown mode '" + mode_name + "'");
  const Vec3 start = parse_point("--from", from), goal = parse_point("--to", to);
  const SphereMap map = decode_snapshot(read_bytes(map_path));
  std::optional<PlanResult> path;
  std::optional<PathCheck> check;
  if (*mode == PlanMode::cached || *mode == PlanMode::full_graph) {
    path = *mode == PlanMode::cached ? plan_cached(map, start, goal, s.cost) : astar_sphere_graph(map, start, goal, s.cost);
    if (path && !world_path.empty()) {
      const OccupancyGrid truth = load_grid(read_bytes(world_path));
      check = check_path_clearance(truth, waypoint_positions(*path), s.cost.r_min);
    }
  } else {
    if (world_path.empty()) throw ConfigError("mode " + mode_name + " needs --world");
    const OccupancyGrid truth = load_grid(read_bytes(world_path));
    PlanningContext ctx = make_context(truth, map, s.cost, s.grid_factor);
    ctx.rrt = s.rrt;
    path = run_planner(ctx, *mode, start, goal);
    if (path) check = check_path_clearance(truth, waypoint_positions(*path), s.cost.r_min);
  }
  if (!path) throw NoPath("no path from " + from + " to " + to + " in mode " + mode_name);

  Table t;
  t.notes = {"path mode " + mode_name};
  t.header = {"x", "y", "z", "clearance"};
  for (const Waypoint& w : path->waypoints) {
    t.rows.push_back({fmt(w.p.x(), 4), fmt(w.p.y(), 4), fmt(w.p.z(), 4), fmt(w.clearance, 4)});
  }
  if (!c.out.empty()) write_text(c.out, to_csv(t));
  std::cout << "mode " << mode_name << " waypoints " << path->waypoints.size() << " L " << fmt(path->length, 3) << " Z "
            << fmt(path->risk, 3) << " J " << fmt(path->cost, 3) << " time_ms " << fmt(path->planning_time * 1e3, 3);
  if (check) std::cout << " min_clearance " << fmt(check->min_clearance, 3) << (check->safe ? " safe" : " UNSAFE");
  std::cout << "\n";
  return kOk;
}

int cmd_export_ltv(const Common& c, const std::string& map_path, const std::string& grid_path) {
  c.settings();  // validates the params file
  const SphereMap map = decode_snapshot(read_bytes(map_path));
  const OccupancyGrid grid = load_grid(read_bytes(grid_path));
  const LtvMap ltv = extract(map, grid);
  write_bytes(c.out, encode(ltv));
  const SizeReport sizes = size_report(ltv, grid);
  std::cout << "segments " << ltv.segments.size() << " edges " << ltv.edges.size() << " goals " << ltv.goals.size()
            << " ltv_bytes " << sizes.ltv_bytes << " coarse_grid_bytes " << sizes.coarse_grid_bytes << " grid_bytes "
            << sizes.grid_bytes << "\n";
  return kOk;
}

int cmd_bench(const Common& c, const std::string& scenario, const std::string& from, const std::string& to) {
  Settings s = c.settings();
  check_desk_scale(s.world);
  const World w = generate_world(s.world);
  if (scenario == "compression" || scenario == "iterations") {
    const MissionTrace trace = make_tour(w, s.tour_step);
    if (scenario == "compression") {
      write_text(c.out, to_csv(scenario_compression(w, trace, s.build, s.checkpoint_every, s.cost).table));
    } else {
      MissionOptions opt;
      opt.sensor = s.sensor;
      Table t = iteration_table(run_mission(w.grid, trace, s.build, s.cost, opt));
      t.notes.push_back(kTimingNote);
      write_text(c.out, to_csv(t));
    }
    return kOk;
  }
  if (scenario != "multi-goal" && scenario != "single-goal") throw ConfigError("unknown scenario '" + scenario + "'");
  const MissionResult built = sweep_build(w, s.build, s.cost);
  PlanningContext ctx = make_context(w.grid, built.map, s.cost, s.grid_factor);
  ctx.rrt = s.rrt;
  if (scenario == "single-goal") {
    const Vec3 start = from.empty() ? w.start : parse_point("--from", from);
    const Vec3 goal = to.empty() ? w.goal : parse_point("--to", to);
    write_text(c.out, to_csv(scenario_single_goal(ctx, start, goal).table));
  } else {
    const std::vector<Vec3> goals = sample_goals(built.map, w.start, s.goals, s.build.seed);
    write_text(c.out, to_csv(scenario_multi_goal(ctx, w.start, goals).table));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SphereMap tools: world generation, map building, planning and benchmarks"};
  app.require_subcommand(1);

  Common gen_c, build_c, plan_c, ltv_c, bench_c;
  std::string build_world, build_known;
  std::string plan_map, plan_world, plan_from, plan_to, plan_mode = "cached";
  std::string ltv_map, ltv_grid;
  std::string bench_scenario = "single-goal", bench_from, bench_to;

  auto* gen = app.add_subcommand("gen", "generate a world and write its VOXGRID file");
  gen_c.attach(gen, true);

  auto* build = app.add_subcommand("build", "run a mission and write the SMAP snapshot");
  build_c.attach(build, true);
  build->add_option("--world", build_world, "VOXGRID world to sweep instead of generating one");
  build->add_option("--known-out", build_known, "also write the revealed grid");

  auto* plan = app.add_subcommand("plan", "plan one path on a SMAP snapshot");
  plan_c.attach(plan, false);
  plan->add_option("--map", plan_map, "SMAP snapshot")->required();
  plan->add_option("--world", plan_world, "VOXGRID truth, needed by the grid and rrt modes");
  plan->add_option("--from", plan_from, "start x,y,z")->required();
  plan->add_option("--to", plan_to, "goal x,y,z")->required();
  plan->add_option("--mode", plan_mode, "cached|full|grid|grid-length|rrt");

  auto* ltv = app.add_subcommand("export-ltv", "extract and write the LTVM map");
  ltv_c.attach(ltv, true);
  ltv->add_option("--map", ltv_map, "SMAP snapshot")->required();
  ltv->add_option("--grid", ltv_grid, "VOXGRID occupancy the map was built from")->required();

  auto* bench = app.add_subcommand("bench", "run a benchmark scenario and write its CSV");
  bench_c.attach(bench, false);
  bench->add_option("--scenario", bench_scenario, "single-goal|multi-goal|compression|iterations");
  bench->add_option("--from", bench_from, "single-goal start x,y,z");
  bench->add_option("--to", bench_to, "single-goal goal x,y,z");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kConfig;
  }

  try {
    if (*gen) return cmd_gen(gen_c);
    if (*build) return cmd_build(build_c, build_world, build_known);
    if (*plan) return cmd_plan(plan_c, plan_map, plan_world, plan_from, plan_to, plan_mode);
    if (*ltv) return cmd_export_ltv(ltv_c, ltv_map, ltv_grid);
    if (*bench) return cmd_bench(bench_c, bench_scenario, bench_from, bench_to);
  } catch (const NoPath& e) {
    std::cerr << e.what() << "\n";
    return kNoPath;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
