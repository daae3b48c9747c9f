mod commands;
mod settings;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "bbm-lab", version, about = "Branching Brownian motion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by every subcommand. Each may also be set in the config
/// file under its snake_case name.
#[derive(Args, Debug, Default)]
struct Common {
    /// Spatial dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Time horizon t.
    #[arg(long)]
    horizon: Option<f64>,
    /// Offset(s) y, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    y: Option<Vec<f64>>,
    /// Number of independent replicas.
    #[arg(long)]
    replicas: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint spacing (simulations) or sampler step (estimators).
    #[arg(long)]
    grid_step: Option<f64>,
    /// Pruning: `none`, `true` for the default lag, or a lag value.
    #[arg(long)]
    prune: Option<String>,
    /// Population cap per replica.
    #[arg(long)]
    max_particles: Option<usize>,
    /// Directory for output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Format of standard output.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn settings(self) -> bbm_core::Result<Settings> {
        let mut s = Settings::load(self.config.as_deref())?;
        s.flag("dim", self.dim);
        s.flag("horizon", self.horizon);
        s.flag("y", self.y);
        s.flag("replicas", self.replicas);
        s.flag("seed", self.seed);
        s.flag("grid_step", self.grid_step);
        s.flag("prune", self.prune);
        s.flag("max_particles", self.max_particles);
        s.flag("out_dir", self.out_dir);
        s.flag("format", self.format);
        Ok(s)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one replica and export its genealogy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Replica index under the master seed.
        #[arg(long)]
        replica: Option<u64>,
    },
    /// Tabulate the frontier curve and its centred version.
    Frontier {
        #[command(flatten)]
        common: Common,
        /// Regularity exponent for the reported Holder constant.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Build and verify a spherical cap covering.
    Covering {
        #[command(flatten)]
        common: Common,
        /// Radius R setting the cap angle sqrt(2/R).
        #[arg(long)]
        radius: Option<f64>,
        /// Random directions used to verify coverage.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Probability a Brownian path stays above -y (optionally bent).
    Ballot {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: BarrierFlags,
    },
    /// Excursion probability below a curve ending in a unit window.
    Excursion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: BarrierFlags,
        /// Window start z.
        #[arg(long)]
        z: Option<f64>,
        /// Use the Girsanov-tilted estimator.
        #[arg(long)]
        tilted: bool,
    },
    /// Compare both sides of the first or second moment identity.
    IdentityCheck {
        #[command(flatten)]
        common: Common,
        /// `many-to-one` or `many-to-two`.
        #[arg(long)]
        identity: Option<String>,
        /// `unit`, `tail` (|B_t| >= level) or `half-plane` (B_t . e1 >= 0).
        #[arg(long)]
        functional: Option<String>,
        /// Level of the `tail` functional; defaults to sqrt(2t).
        #[arg(long)]
        level: Option<f64>,
        /// Brownian samples; defaults to 100 times the replicas.
        #[arg(long)]
        bm_replicas: Option<usize>,
    },
    /// Tail of the maximal displacement beyond the predicted radius.
    Tail {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        campaign: CampaignFlags,
    },
    /// Probability that some path crosses the frontier curve.
    Crossing {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        campaign: CampaignFlags,
    },
    /// Radial versus directional maxima, or directional frontier counts.
    Directional {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        campaign: CampaignFlags,
        /// Count particles crossing the directional frontier instead.
        #[arg(long)]
        count: bool,
    },
    /// Common-ancestor times of close pairs near the frontier.
    Genealogy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        campaign: CampaignFlags,
        /// Lookbacks R, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        lookbacks: Option<Vec<f64>>,
    },
}

#[derive(Args, Debug, Default)]
pub struct BarrierFlags {
    /// Check grid points only, without the bridge correction.
    #[arg(long)]
    no_bridge: bool,
    /// Bending amplitude A of the barrier.
    #[arg(long)]
    bend: Option<f64>,
    /// Bending exponent in (0, 1/2).
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct CampaignFlags {
    /// Check grid points only, without the bridge correction.
    #[arg(long)]
    no_bridge: bool,
    /// Replicas computed between checkpoint flushes.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Rerun the campaign recorded in this manifest; other flags override it.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl CampaignFlags {
    fn apply(self, s: &mut Settings) {
        s.flag("bridge", self.no_bridge.then_some(false));
        s.flag("batch_size", self.batch_size);
        s.flag("manifest", self.manifest);
    }
}

impl BarrierFlags {
    fn apply(self, s: &mut Settings) {
        s.flag("bridge", self.no_bridge.then_some(false));
        s.flag("bend", self.bend);
        s.flag("alpha", self.alpha);
    }
}

fn run(cli: Cli) -> bbm_core::Result<commands::Output> {
    use bbm_core::experiments::ExperimentKind;
    match cli.command {
        Command::Simulate { common, replica } => {
            let mut s = common.settings()?;
            s.flag("replica", replica);
            commands::simulate(s)
        }
        Command::Frontier { common, alpha } => {
            let mut s = common.settings()?;
            s.flag("alpha", alpha);
            commands::frontier(s)
        }
        Command::Covering { common, radius, samples } => {
            let mut s = common.settings()?;
            s.flag("radius", radius);
            s.flag("samples", samples);
            commands::covering(s)
        }
        Command::Ballot { common, barrier } => {
            let mut s = common.settings()?;
            barrier.apply(&mut s);
            commands::ballot(s)
        }
        Command::Excursion { common, barrier, z, tilted } => {
            let mut s = common.settings()?;
            barrier.apply(&mut s);
            s.flag("z", z);
            s.flag("tilted", tilted.then_some(true));
            commands::excursion(s)
        }
        Command::IdentityCheck { common, identity, functional, level, bm_replicas } => {
            let mut s = common.settings()?;
            s.flag("identity", identity);
            s.flag("functional", functional);
            s.flag("level", level);
            s.flag("bm_replicas", bm_replicas);
            commands::identity_check(s)
        }
        Command::Tail { common, campaign } => {
            let mut s = common.settings()?;
            campaign.apply(&mut s);
            commands::campaign(ExperimentKind::Tail, s)
        }
        Command::Crossing { common, campaign } => {
            let mut s = common.settings()?;
            campaign.apply(&mut s);
            commands::campaign(ExperimentKind::Crossing, s)
        }
        Command::Directional { common, campaign, count } => {
            let mut s = common.settings()?;
            campaign.apply(&mut s);
            let kind = if count { ExperimentKind::DirectionalCount } else { ExperimentKind::Directional };
            commands::campaign(kind, s)
        }
        Command::Genealogy { common, campaign, lookbacks } => {
            let mut s = common.settings()?;
            campaign.apply(&mut s);
            s.flag("lookbacks", lookbacks);
            commands::campaign(ExperimentKind::Genealogy, s)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).and_then(|out| out.emit()) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not an error worth reporting.
            let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bbm-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
