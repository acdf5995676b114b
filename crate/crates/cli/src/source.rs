//! Shared `--preset` / `--ode` handling for all subcommands.

use std::path::PathBuf;

use carleman_core::{
    build_reaction_diffusion, load_ode_spec, CarlemanError, PolynomialODE,
    ReactionDiffusionParams, Result,
};
use clap::Args;

/// Where the system comes from: a named benchmark instance or a JSON file
/// on disk. The reaction and plateau flags tweak preset construction only.
#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Named benchmark instance: fig1, fig2, or fig2-alt
    #[arg(long, value_name = "NAME", conflicts_with = "ode")]
    pub preset: Option<String>,

    /// Path to a polynomial system as a JSON file
    #[arg(long, value_name = "PATH")]
    pub ode: Option<PathBuf>,

    /// Build the preset with the expanded reaction sign, -a on the linear
    /// diagonal (presets already choose this)
    #[arg(long, conflicts_with = "verbatim_reaction")]
    pub expanded_reaction: bool,

    /// Build the preset with the verbatim +a reaction sign instead
    #[arg(long)]
    pub verbatim_reaction: bool,

    /// Start the initial plateau at the boundary point (presets already
    /// choose this)
    #[arg(long, conflicts_with = "strict_plateau")]
    pub inclusive_plateau: bool,

    /// Keep the initial plateau strictly inside the domain instead
    #[arg(long)]
    pub strict_plateau: bool,
}

/// A constructed system together with the horizon to use when `--T` is
/// unset and a label for log lines.
pub struct LoadedSystem {
    pub ode: PolynomialODE,
    pub horizon: f64,
    pub label: String,
}

/// Resolves the source arguments. `Ok(None)` means no source was named,
/// which only `equivalence` accepts (it falls back to a sampled system).
pub fn load_system(args: &SourceArgs) -> Result<Option<LoadedSystem>> {
    if let Some(name) = &args.preset {
        let mut params = ReactionDiffusionParams::preset(name).ok_or_else(|| {
            CarlemanError::InvalidInput(format!(
                "unknown preset {name:?}; expected fig1, fig2, or fig2-alt"
            ))
        })?;
        if args.expanded_reaction {
            params.expanded_reaction = true;
        }
        if args.verbatim_reaction {
            params.expanded_reaction = false;
        }
        if args.inclusive_plateau {
            params.inclusive_plateau = true;
        }
        if args.strict_plateau {
            params.inclusive_plateau = false;
        }
        let horizon = params.t_final;
        let label = format!("preset {name} (u_in = {})", params.u_in);
        let ode = build_reaction_diffusion(&params)?;
        return Ok(Some(LoadedSystem { ode, horizon, label }));
    }
    reject_preset_flags(args)?;
    if let Some(path) = &args.ode {
        let ode = load_ode_spec(path)?;
        let label = path.display().to_string();
        return Ok(Some(LoadedSystem {
            ode,
            horizon: 1.0,
            label,
        }));
    }
    Ok(None)
}

/// Like [`load_system`] but demands a source.
pub fn require_system(args: &SourceArgs) -> Result<LoadedSystem> {
    load_system(args)?.ok_or_else(|| {
        CarlemanError::InvalidInput("no system given; pass --preset or --ode".into())
    })
}

fn reject_preset_flags(args: &SourceArgs) -> Result<()> {
    if args.expanded_reaction
        || args.verbatim_reaction
        || args.inclusive_plateau
        || args.strict_plateau
    {
        return Err(CarlemanError::InvalidInput(
            "reaction and plateau flags only apply together with --preset".into(),
        ));
    }
    Ok(())
}
