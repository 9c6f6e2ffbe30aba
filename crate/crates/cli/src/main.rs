use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use navrec::network::{enumerate_path_sets, OdPair};
use navrec::scenario::{
    builtin_scenario, load_scenario, run_pipeline, run_suite, AttackProfile, Recommender,
    RunReport, Scenario, ScenarioAttack, BUILTIN_NAMES, SUITE_NAMES,
};
use navrec::verify::run_verification;
use navrec::Error;

#[derive(Parser)]
#[command(
    name = "navrec",
    version,
    about = "Navigation recommendations under fabricated-demand attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate candidate paths for every OD pair of a scenario.
    Paths(Common),
    /// Solve the Wardrop equilibrium of the scenario's users.
    SolveWe(Common),
    /// Solve the recommendation game by best-response dynamics.
    SolveRs(Common),
    /// Run an attack and the recommender under it.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// Reproduce a builtin scenario or a composite suite.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// Run the property suite.
    Verify {
        /// Seed for the random instances.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Builtin scenario name or path to a scenario JSON file.
    #[arg(long, default_value = "five_node")]
    scenario: String,
    /// Output directory.
    #[arg(long, env = "NAVREC_OUT", default_value = "navrec-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Equilibrium gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Total fake demand for the uniform and random attackers.
    #[arg(long)]
    budget: Option<u64>,
    /// Number of random-attacker trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Required true-user flow on the target edge.
    #[arg(long)]
    gamma: Option<f64>,
    /// Target edge as `tail-head` or edge id.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Optimal,
    Uniform,
    Random,
    Cost,
    DriverOverride,
}

impl From<Profile> for AttackProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Optimal => AttackProfile::Optimal,
            Profile::Uniform => AttackProfile::Uniform,
            Profile::Random => AttackProfile::Random,
            Profile::Cost => AttackProfile::Cost,
            Profile::DriverOverride => AttackProfile::DriverOverride,
        }
    }
}

impl AttackArgs {
    fn is_empty(&self) -> bool {
        self.profile.is_none()
            && self.budget.is_none()
            && self.trials.is_none()
            && self.gamma.is_none()
            && self.target.is_none()
    }
}

fn resolve_scenario(name: &str) -> Result<Scenario> {
    if BUILTIN_NAMES.contains(&name) {
        return Ok(builtin_scenario(name)?);
    }
    let path = Path::new(name);
    if path.exists() {
        return Ok(load_scenario(path)?);
    }
    Err(Error::UnknownScenario(name.to_string()).into())
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = resolve_scenario(&common.scenario)?;
    if let Some(seed) = common.seed {
        s.solver.seed = seed;
    }
    if let Some(tol) = common.tol {
        s.solver.tolerance = tol;
    }
    if let Some(m) = common.max_iter {
        s.solver.max_iter = m;
    }
    s.solver.validate()?;
    Ok(s)
}

fn apply_attack(s: &mut Scenario, args: &AttackArgs) -> Result<()> {
    if s.attack.is_none() {
        s.attack = Some(ScenarioAttack {
            profile: AttackProfile::Optimal,
            target_edge: None,
            gamma: 0.0,
            candidates: Vec::new(),
            budget: None,
            trials: 200,
            edge_overrides: Vec::new(),
            driver_overrides: Vec::new(),
        });
    }
    let a = s.attack.as_mut().expect("attack section present");
    if let Some(p) = args.profile {
        a.profile = p.into();
    }
    if let Some(b) = args.budget {
        a.budget = Some(b);
    }
    if let Some(t) = args.trials {
        a.trials = t;
    }
    if let Some(g) = args.gamma {
        a.gamma = g;
    }
    if let Some(t) = &args.target {
        a.target_edge = Some(t.clone());
    }
    let total = s.user_demand().total();
    let a = s.attack.as_ref().expect("attack section present");
    if a.profile.fabricates_demand() && a.gamma > total {
        return Err(Error::GammaInfeasible {
            gamma: a.gamma,
            total_demand: total,
        }
        .into());
    }
    if a.profile.fabricates_demand() && a.target_edge.is_none() {
        return Err(Error::InvalidArgument("attack needs a target edge (--target)".into()).into());
    }
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn paths(common: &Common) -> Result<()> {
    let s = load(common)?;
    let mut ods: Vec<OdPair> = s.users.iter().map(|g| g.od.clone()).collect();
    ods.extend(s.drivers.iter().map(|c| c.od.clone()));
    if let Some(a) = &s.attack {
        ods.extend(a.candidates.iter().cloned());
    }
    let sets = enumerate_path_sets(&s.network, &ods, s.path_k)?;
    fs::create_dir_all(&common.out)?;
    let mut text = String::from("od,rank,path,free_flow_cost\n");
    for (od, paths) in &sets {
        for (i, p) in paths.iter().enumerate() {
            text.push_str(&format!(
                "{od},{},{},{:.9}\n",
                i + 1,
                p.label(),
                p.free_flow_cost(&s.network)
            ));
        }
    }
    fs::write(common.out.join("paths.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn solve(common: &Common, recommender: Recommender) -> Result<()> {
    let mut s = load(common)?;
    s.recommender = recommender;
    s.attack = None;
    let report = run_pipeline(&s)?;
    report.write_artifacts(&common.out)?;
    if !report.baseline.converged {
        eprintln!(
            "warning: solver stopped after {} iterations with gap {:.3e}",
            report.baseline.iterations, report.baseline.final_gap
        );
    }
    print!("{}", report.summary());
    Ok(())
}

/// `plan,od,count`, one row per fabricated OD pair of each plan.
fn write_plans(report: &RunReport, out: &Path) -> Result<()> {
    let mut f = create(&out.join("attack_plan.csv"))?;
    writeln!(f, "plan,od,count")?;
    if let Some(a) = &report.attack {
        for (i, plan) in a.plans.iter().enumerate() {
            for (od, n) in &plan.fake_demands {
                writeln!(f, "{i},{od},{n}")?;
            }
        }
    }
    Ok(())
}

/// `edge,no_attack,attacked`: true-user load per edge.
fn write_attack_edge_flows(report: &RunReport, out: &Path) -> Result<()> {
    let mut f = create(&out.join("attack_edge_flows.csv"))?;
    writeln!(f, "edge,no_attack,attacked")?;
    let attacked = report.headline();
    for (i, e) in report.edges.iter().enumerate() {
        writeln!(
            f,
            "{e},{:.9},{:.9}",
            report.baseline.true_user_loads.get(i),
            attacked.true_user_loads.get(i)
        )?;
    }
    Ok(())
}

fn attack(common: &Common, args: &AttackArgs) -> Result<()> {
    let mut s = load(common)?;
    apply_attack(&mut s, args)?;
    let report = run_pipeline(&s)?;
    report.write_artifacts(&common.out)?;
    write_plans(&report, &common.out)?;
    write_attack_edge_flows(&report, &common.out)?;
    print!("{}", report.summary());
    Ok(())
}

fn bench(common: &Common, args: &AttackArgs) -> Result<()> {
    if SUITE_NAMES.contains(&common.scenario.as_str()) {
        if !args.is_empty() || common.tol.is_some() || common.max_iter.is_some() {
            bail!(Error::InvalidArgument(
                "composite suites accept only --seed and --out".into()
            ));
        }
        let result = run_suite(&common.scenario, common.seed, Some(&common.out))?;
        for r in &result.reports {
            print!("{}", r.summary());
        }
        println!("scenario,attack,baseline_total,combined_total,delta,paradox");
        for row in &result.comparison.rows {
            println!(
                "{},{},{:.6},{:.6},{:.6},{}",
                row.scenario,
                row.attack.map_or("none", |a| a.as_str()),
                row.baseline_total,
                row.combined_total,
                row.delta,
                row.paradox
            );
        }
        return Ok(());
    }
    let mut s = load(common)?;
    if !args.is_empty() {
        apply_attack(&mut s, args)?;
    }
    let report = run_pipeline(&s)?;
    let dir = common.out.join(&report.scenario);
    report.write_artifacts(&dir)?;
    if report.attack.is_some() {
        write_plans(&report, &dir)?;
        write_attack_edge_flows(&report, &dir)?;
    }
    print!("{}", report.summary());
    Ok(())
}

fn verify(seed: u64) -> Result<bool> {
    let checks = run_verification(seed)?;
    for c in &checks {
        println!(
            "{}  {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_infeasibility() => 1,
        Some(Error::Io(_))
        | Some(Error::Csv(_))
        | Some(Error::TopologyMismatch(_))
        | Some(Error::EmptyCandidates) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Paths(c) => paths(c).map(|_| true),
        Command::SolveWe(c) => solve(c, Recommender::We).map(|_| true),
        Command::SolveRs(c) => solve(c, Recommender::Rs).map(|_| true),
        Command::Attack { common, attack: a } => attack(common, a).map(|_| true),
        Command::Bench { common, attack: a } => bench(common, a).map(|_| true),
        Command::Verify { seed } => verify(*seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
