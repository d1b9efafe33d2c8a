//! Long-run checks of the Langevin model against its Fokker–Planck limit.

use fbcool::constants::{AMU, HBAR, KB};
use fbcool::lti::{fig2_loop_physical, LoopTag};
use fbcool::optics::{recoil_energy, wavenumber};
use fbcool::sim::{self, SimConfig, SimPhysics, VelocityInit};

/// For the differentiator with η = q = 1, drift −ηΓsc·v_r·uv/(u²+v²) and
/// diffusion 2ηΓsc·v_r²(2u²+v²)/(u²+v²) give the stationary density
/// `P ∝ (u²+v²)(2u²+v²)^−(u/2v_r + 1)`. At u = 20 v_r its second moment is
/// ⟨v²⟩ = (46/357)·u², i.e. kB·T = (36800/357)·Er. At u = 2 v_r the same
/// density falls off as v⁻² and has no second moment.
#[test]
fn stationary_temperature_matches_fokker_planck() {
    let k = wavenumber(760e-9);
    let m = 41.0 * AMU;
    let er = recoil_energy(k, m);
    let v_r = HBAR * k / m;
    let p = SimPhysics {
        k,
        mass: m,
        gamma_sc: 2e4,
        eta: 1.0,
        u0: 0.05 * er,
        r: -1.0,
        q: 1.0,
    };
    let u = 20.0 * v_r;
    let v_max = 40.0 * v_r;
    let mut cfg = SimConfig::new(p, fig2_loop_physical(LoopTag::A, k, u).unwrap(), v_max, 1);
    cfg.rolloff = Some(2.0 * 2.0 * k * v_max);
    let dt = cfg.effective_dt().unwrap();
    cfg.n_steps = (20e-3 / dt).ceil() as u64;
    cfg.burn_in = (5e-3 / dt).ceil() as u64;
    // Single trajectories wander far into the tail, so the spread between
    // them is wide and many are needed for a 10% estimate.
    cfg.n_trajectories = 512;
    cfg.seed = 17;
    let expect = 36800.0 / 357.0;
    cfg.velocity = VelocityInit::Thermal {
        t: expect * er / KB,
    };
    let t = sim::equilibrium_temperature(&cfg).unwrap();
    let measured = t.kelvin * KB / er;
    let stderr = t.stderr * KB / er;
    println!("kBT = {measured:.2} ± {stderr:.2} Er");
    assert!(
        (measured / expect - 1.0).abs() < 0.1,
        "kBT = {measured:.2} ± {stderr:.2} Er, expected {expect:.2} Er"
    );
}
