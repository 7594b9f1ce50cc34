use beltmp::motion::CostConfig;
use beltmp::pddl::{parse_domain, parse_problem};
use beltmp::scenario::Scenario;
use beltmp::tmp::solve;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scenario = Scenario::from_file(&args[1]).unwrap();
    let domain = parse_domain(&std::fs::read_to_string(&args[2]).unwrap()).unwrap();
    let problem = parse_problem(&std::fs::read_to_string(&args[3]).unwrap()).unwrap();
    let config = CostConfig::from_index(args[4].parse().unwrap()).unwrap();
    let seed: u64 = args[5].parse().unwrap();
    let t = Instant::now();
    match solve(&scenario, &domain, &problem, config, seed) {
        Ok(sol) => {
            println!("feasible={} t={:.2}s nodes={} edges={}", sol.report.feasible, t.elapsed().as_secs_f64(), sol.report.roadmap_nodes, sol.report.roadmap_edges);
            println!("{}", sol.report.plan_text);
            if let Some(p) = &sol.report.rejected_plan {
                println!("REJECTED step={:?} traces={:?}", sol.report.violated_step, p.goal_traces);
            }
            for leg in &sol.report.motion_legs {
                println!("leg {}->{} len={:.2} csig={:.3} bound={:.4} nodes={}", leg.from, leg.to, leg.length, leg.c_sigma, leg.c_sigma_g, leg.nodes.len());
            }
        }
        Err(e) => println!("error: {e}"),
    }
}
