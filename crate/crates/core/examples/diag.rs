// Gridding PSNR for the current generator settings, R=1 and R=2.
use ncrecon::classical::*;
use ncrecon::nufft::*;
use ncrecon::sim::*;
use ncrecon::traj::*;
use std::sync::Arc;

fn main() {
    let shape = (64usize, 64usize);
    for accel in [1.0f32, 2.0] {
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, 5);
        let truth = make_phantom(&phantom).unwrap();
        let maps = make_coil_maps(shape, 8, 5).unwrap();
        let spec = SamplingSpec::new(shape, accel, 7);
        let traj = generate_vd_trajectory(&spec).unwrap();
        let plan = plan_nufft(shape, &traj, 2.0, 4).unwrap();
        let op = SenseOp::new(Arc::new(plan), Arc::new(maps)).unwrap();
        let y = op.forward_coils(truth.data()).unwrap();
        let w = density_compensation(op.plan()).unwrap();
        let x = gridding_recon(&op, &w, &y).unwrap();
        let a = adjoint_recon(&op, &y).unwrap();
        let c = cg_sense(&op, &y, 1e-4, 50, 1e-6).unwrap();
        println!(
            "R={accel}: M={} gridding {:.2} dB adjoint {:.2} dB cg {:.2} dB",
            traj.len(),
            magnitude_psnr(&truth, &x).unwrap(),
            magnitude_psnr(&truth, &a).unwrap(),
            magnitude_psnr(&truth, &c.image).unwrap()
        );
    }
}
