// Scratch exploration binary (not part of the deliverable surface): prints
// the desk-scale quantities the test suite freezes.

use piezo_core::dynamics::{
    init_state, run, GaussianPulse, InitialCondition, Scenario, TimeSteppingConfig,
    VectorPotential,
};
use piezo_core::energy::{audit_balance, energy, fit_decay, spectral_abscissa};
use piezo_core::grid::build_grid;
use piezo_core::materials::{ElasticityTensor, MaterialSet, PiezoTensor, QField};
use piezo_core::operators::assemble;
use piezo_core::resolvent::coercivity_estimate;

fn unit_material() -> MaterialSet {
    MaterialSet {
        elasticity: ElasticityTensor::isotropic(1.0, 1.0),
        piezo: PiezoTensor::zero(),
        eps: 1.0,
        mu: 1.0,
        gain_a: 1.0,
        q_field: QField::IdentityScale(1.0),
    }
}

fn generic_material() -> MaterialSet {
    let upper = [
        3.0, 0.2, -0.1, 0.05, 0.1, -0.15, //
        2.8, 0.15, -0.05, 0.2, 0.1, //
        3.2, 0.1, -0.2, 0.05, //
        2.5, 0.05, -0.1, //
        2.7, 0.15, //
        2.9,
    ];
    let piezo = [
        [0.3, -0.1, 0.2, 0.05, -0.15, 0.1],
        [-0.2, 0.25, -0.05, 0.1, 0.2, -0.1],
        [0.1, -0.05, 0.15, -0.2, 0.05, 0.25],
    ];
    MaterialSet {
        elasticity: ElasticityTensor::from_upper_triangle(&upper),
        piezo: PiezoTensor::from_entries(piezo),
        eps: 1.3,
        mu: 0.8,
        gain_a: 0.7,
        q_field: QField::UniformMatrix(nalgebra::Matrix3::new(
            1.0, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.1,
        )),
    }
}

fn gaussian() -> Scenario {
    Scenario {
        name: "gaussian".into(),
        initial: InitialCondition::GaussianDisplacement(GaussianPulse {
            center: [0.5, 0.5, 0.5],
            width: 0.1,
            amplitude: 1.0,
            direction: [1.0, 0.0, 0.0],
        }),
    }
}

fn main() {
    let t0 = std::time::Instant::now();

    // 1. spectrum of the full dissipative system on 2^3 (unit + generic)
    for (name, mat) in [("unit", unit_material()), ("generic", generic_material())] {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &mat).unwrap();
        let rep = spectral_abscissa(&sys, 2000).unwrap();
        println!(
            "[2^3 {name}] abscissa = {:.6e}, decay_abscissa = {:.6e}, kernel = {}/{}, null_tol = {:.1e}",
            rep.abscissa, rep.decay_abscissa, rep.kernel_count, rep.eigen_count, rep.null_tol
        );
    }

    // 2. coercivity identity case: lambda = 0, mu_L = 1/2, eps = mu = 1, A = 0...
    // A = 0 violates validation (gainA > 0); probe with tiny A and with A = 1
    for a in [1e-12, 1.0] {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let mut m = unit_material();
        m.elasticity = ElasticityTensor::isotropic(0.0, 0.5);
        m.q_field = QField::zero();
        m.gain_a = a;
        let sys = assemble(&g, &m).unwrap();
        let c = coercivity_estimate(&sys, 4000).unwrap();
        println!("[coercivity identity-case] A = {a:.0e}: c_min = {c:.12}");
    }
    // generic material coercivity
    {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap();
        let c = coercivity_estimate(&sys, 4000).unwrap();
        println!("[coercivity generic] c_min = {c:.12}");
    }

    // 3. decay rate on small grids: 4^3 quick look
    {
        let g = build_grid([1.0, 1.0, 1.0], [4, 4, 4]).unwrap();
        let sys = assemble(&g, &unit_material()).unwrap();
        let cfg = TimeSteppingConfig {
            dt: 0.125,
            t_end: 20.0,
            solver_tol: 1e-11,
            max_iters: 2000,
            record_every: 1,
        };
        let t = std::time::Instant::now();
        let (trace, _) = run(&gaussian(), &sys, &cfg).unwrap();
        let fit = fit_decay(&trace, (10.0, 20.0)).unwrap();
        let audit = audit_balance(&trace, 1e-8).unwrap();
        println!(
            "[4^3 unit] E0 = {:.4e}, E(20) = {:.4e}, ratio = {:.3e}, omega = {:.4}, r2 = {:?}, audit = {:.2e}, wall = {:.1?}",
            trace.energy[0],
            trace.energy.last().unwrap(),
            trace.energy.last().unwrap() / trace.energy[0],
            fit.omega,
            fit.r_squared,
            audit.max_residual,
            t.elapsed()
        );
    }

    // 4. 2^3 long run for the spectrum/decay cross-check
    {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &unit_material()).unwrap();
        let rep = spectral_abscissa(&sys, 2000).unwrap();
        let cfg = TimeSteppingConfig {
            dt: 0.05,
            t_end: 40.0,
            solver_tol: 1e-12,
            max_iters: 2000,
            record_every: 4,
        };
        let (trace, _) = run(&gaussian(), &sys, &cfg).unwrap();
        let fit = fit_decay(&trace, (20.0, 40.0)).unwrap();
        println!(
            "[2^3 unit cross] decay_abscissa = {:.6}, 2|s| = {:.6}, omega_fit = {:.6}, ratio err = {:.3}, E(T)/E0 = {:.2e}, r2 = {:?}",
            rep.decay_abscissa,
            2.0 * rep.decay_abscissa.abs(),
            fit.omega,
            (fit.omega - 2.0 * rep.decay_abscissa.abs()).abs() / (2.0 * rep.decay_abscissa.abs()),
            trace.energy.last().unwrap() / trace.energy[0],
            fit.r_squared
        );
    }

    // 5. divergence drift over 500 steps from solenoidal data (4^3)
    {
        let g = build_grid([1.0, 1.0, 1.0], [4, 4, 4]).unwrap();
        let sys = assemble(&g, &unit_material()).unwrap();
        let scenario = Scenario {
            name: "solenoidal".into(),
            initial: InitialCondition::SolenoidalEm {
                h_potential: VectorPotential {
                    linear: [[0.0, 0.3, 0.0], [0.0, 0.0, 0.5], [0.2, 0.0, 0.0]],
                    cross: [0.4, -0.2, 0.3],
                },
                e_potential: Some(VectorPotential {
                    linear: [[0.0, -0.2, 0.1], [0.3, 0.0, 0.0], [0.0, 0.1, 0.0]],
                    cross: [0.0; 3],
                }),
            },
        };
        let (s0, res0) = init_state(&scenario, &sys).unwrap();
        println!(
            "[div drift] initial: divD = {:.3e}, divMuH = {:.3e}, energy = {:.4e}",
            res0.div_d,
            res0.div_mu_h,
            energy(&sys, &s0)
        );
        let cfg = TimeSteppingConfig {
            dt: 0.02,
            t_end: 10.0,
            solver_tol: 1e-11,
            max_iters: 2000,
            record_every: 50,
        };
        let t = std::time::Instant::now();
        let (trace, _) = run(&scenario, &sys, &cfg).unwrap();
        println!(
            "[div drift] after 500 steps: divD = {:.3e}, divMuH = {:.3e}, max divD = {:.3e}, max divMuH = {:.3e}, wall = {:.1?}",
            trace.div_d_res.last().unwrap(),
            trace.div_mu_h_res.last().unwrap(),
            trace.div_d_res.iter().copied().fold(0.0f64, f64::max),
            trace.div_mu_h_res.iter().copied().fold(0.0f64, f64::max),
            t.elapsed()
        );
    }

    // 6. 8^3 timing probe: 20 steps at criterion-3 settings
    {
        let g = build_grid([1.0, 1.0, 1.0], [8, 8, 8]).unwrap();
        let sys = assemble(&g, &unit_material()).unwrap();
        let cfg = TimeSteppingConfig {
            dt: 0.0625,
            t_end: 20.0 * 0.0625,
            solver_tol: 1e-11,
            max_iters: 2000,
            record_every: 1,
        };
        let t = std::time::Instant::now();
        let (trace, _) = run(&gaussian(), &sys, &cfg).unwrap();
        println!(
            "[8^3 timing] 20 steps in {:.1?} ({:.2?}/step), E0 = {:.4e}, E/E0 = {:.4}",
            t.elapsed(),
            t.elapsed() / 20,
            trace.energy[0],
            trace.energy.last().unwrap() / trace.energy[0]
        );
    }

    println!("total wall time {:.1?}", t0.elapsed());
}
