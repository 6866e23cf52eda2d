//! Turn a configuration into a concrete solver through the role tags of the
//! nodes on its path.
//!
//! Recognized roles: `solver` (direct | gmres), `restart`, `preconditioner`
//! (system_amg | cpr | naive), `amg` (classic | aggregation),
//! `strong_threshold`, `aggressive_levels`, `sweeps`, `smoother`,
//! `prolongator_smoothing`, `temperature_smoother`, `stage2`, `naive`,
//! `sor_omega`. Missing roles fall back to defaults so that small spaces
//! only need to tag what they tune.

use crate::config_space::{ConfigSpace, RoleView, SolverConfig};
use crate::sparse::{
    CprParams, PrecondKind, SecondStage, SmootherKind, SolverSpec, Strength,
    TemperatureSmoother, TwoLevelParams,
};
use thiserror::Error;

/// Unknowns per cell in the flow-heat systems.
pub const CELL_BLOCK: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot build a solver: {0}")]
pub struct BuildError(pub String);

fn unknown(role: &str, option: &str) -> BuildError {
    BuildError(format!("unknown option `{option}` for role `{role}`"))
}

fn amg_params(v: &RoleView) -> Result<TwoLevelParams, BuildError> {
    let mut p = TwoLevelParams::default();
    match v.choice("amg").unwrap_or("classic") {
        "classic" => {
            p.strength = Strength::Classical;
            p.theta = 0.5;
        }
        "aggregation" => {
            p.strength = Strength::Symmetric;
            p.theta = 0.0;
        }
        o => return Err(unknown("amg", o)),
    }
    if let Some(t) = v.param("strong_threshold") {
        p.theta = t;
    }
    if let Some(l) = v.param("aggressive_levels") {
        p.aggressive_levels = l as usize;
    }
    if let Some(s) = v.param("sweeps") {
        p.sweeps = s as usize;
    }
    if let Some(s) = v.param("prolongator_smoothing") {
        p.prolongator_smoothing = s != 0.0;
    }
    if let Some(s) = v.choice("smoother") {
        p.smoother = match s {
            "jacobi" => SmootherKind::Jacobi,
            "l1_jacobi" => SmootherKind::L1Jacobi,
            "sor" => SmootherKind::Sor,
            "ssor" => SmootherKind::Ssor,
            o => return Err(unknown("smoother", o)),
        };
    }
    Ok(p)
}

pub fn build_from_roles(v: &RoleView) -> Result<SolverSpec, BuildError> {
    match v.choice("solver").unwrap_or("gmres") {
        "direct" => return Ok(SolverSpec::direct(CELL_BLOCK)),
        "gmres" => {}
        o => return Err(unknown("solver", o)),
    }
    let restart = v.param("restart").unwrap_or(30.0) as usize;
    let precond = match v.choice("preconditioner").unwrap_or("naive") {
        "system_amg" => {
            let mut p = amg_params(v)?;
            p.dof_stride = CELL_BLOCK;
            PrecondKind::TwoLevel(p)
        }
        "cpr" => {
            let temperature = match v.choice("temperature_smoother").unwrap_or("none") {
                "none" => None,
                "jacobi" => Some(TemperatureSmoother::Jacobi),
                "sor" => Some(TemperatureSmoother::Sor),
                o => return Err(unknown("temperature_smoother", o)),
            };
            let stage2 = match v.choice("stage2").unwrap_or("block_ilu0") {
                "block_ilu0" | "ilu" => SecondStage::BlockIlu0,
                "block_sor" | "sor" => SecondStage::BlockSor,
                o => return Err(unknown("stage2", o)),
            };
            PrecondKind::CprTwoStage(CprParams {
                pressure: amg_params(v)?,
                temperature,
                stage2,
            })
        }
        "naive" => match v.choice("naive").unwrap_or("block_ilu0") {
            "block_jacobi" => PrecondKind::BlockJacobi { block: CELL_BLOCK },
            "block_sor" => PrecondKind::BlockSor {
                block: CELL_BLOCK,
                omega: v.param("sor_omega").unwrap_or(1.0),
            },
            "block_ilu0" => PrecondKind::BlockIlu { block: CELL_BLOCK, level: 0 },
            "block_ilu1" => PrecondKind::BlockIlu { block: CELL_BLOCK, level: 1 },
            "block_ilu2" => PrecondKind::BlockIlu { block: CELL_BLOCK, level: 2 },
            o => return Err(unknown("naive", o)),
        },
        "none" | "identity" => PrecondKind::Identity,
        o => return Err(unknown("preconditioner", o)),
    };
    Ok(SolverSpec::gmres(restart.max(1), precond))
}

pub fn build_solver(space: &ConfigSpace, config: &SolverConfig) -> Result<SolverSpec, BuildError> {
    let view = space
        .roles_on_path(config)
        .map_err(|e| BuildError(e.to_string()))?;
    build_from_roles(&view)
}
