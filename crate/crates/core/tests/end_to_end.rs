use std::fs::File;

use uvk_core::bench::{gen_sequence, ObjectAppearance, SequenceSpec};
use uvk_core::conv::{separable_conv, DepthwiseKernel, PointwiseKernel, Tensor3, UvkArray};
use uvk_core::frame::{read_sequence, write_sequence, PatchCenter};
use uvk_core::opcount::{model_bytes, ConvMode, NetSpec};
use uvk_core::predictor::{track_csv_row, track_step, Direction, TrackerConfig, TrackerState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn track_through_pgm_files() {
    let spec = SequenceSpec {
        width: 160,
        height: 120,
        object: ObjectAppearance::Blob {
            sigma: 2.0,
            amplitude: 0.6,
        },
        background: 0.2,
        start: PatchCenter::new(60, 60),
        path: vec![(1, 0); 30],
        noise_sigma: 0.01,
        seed: 11,
        dead_zone: 0.5,
    };
    let (frames, _) = gen_sequence(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(&frames, dir.path()).unwrap();
    let loaded = read_sequence(dir.path()).unwrap();
    assert_eq!(loaded.len(), frames.len());

    let mut state = TrackerState::new(&loaded[0], spec.start, TrackerConfig::default()).unwrap();
    let mut rights = 0;
    for frame in &loaded[1..] {
        let step = track_step(&state, frame).unwrap();
        let row = track_csv_row(frame.seq(), step.direction, &step.outcome);
        assert_eq!(row.split(',').count(), 7);
        rights += usize::from(step.direction == Direction::Right);
        state = step.state;
    }
    assert!(rights >= 27, "{rights} Right rows of 30");
    assert!((state.x0 - 89.0).abs() < 2.0);
}

#[test]
fn uvk_files_carry_tensors_and_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = Tensor3::random(&mut rng, 6, 5, 3);
    let dk = DepthwiseKernel::random(&mut rng, 3, 3);
    let pk = PointwiseKernel::random(&mut rng, 3, 4);
    let dir = tempfile::tempdir().unwrap();
    for (name, array) in [
        ("input.uvk", UvkArray::from(&input)),
        ("dk.uvk", UvkArray::from(&dk)),
        ("pk.uvk", UvkArray::from(&pk)),
    ] {
        array.write_to(File::create(dir.path().join(name)).unwrap()).unwrap();
    }
    let load = |name: &str| UvkArray::read_from(File::open(dir.path().join(name)).unwrap()).unwrap();
    let input2 = Tensor3::try_from(load("input.uvk")).unwrap();
    let dk2 = DepthwiseKernel::try_from(load("dk.uvk")).unwrap();
    let pk2 = PointwiseKernel::try_from(load("pk.uvk")).unwrap();
    assert_eq!(
        separable_conv(&input, &dk, &pk).unwrap(),
        separable_conv(&input2, &dk2, &pk2).unwrap()
    );
}

#[test]
fn net_file_round_trip_through_budget() {
    let text = "# three layers\nstandard 3 3 32 112\nseparable 3 32 64 112\nseparable 3 64 64 56\nbytes_per_weight 2\n";
    let net = NetSpec::parse(text).unwrap();
    assert_eq!(net.layers.len(), 3);
    assert_eq!(net.layers[1].mode, ConvMode::Separable);
    let params = 9 * 3 * 32 + (9 * 32 + 32 * 64) + (9 * 64 + 64 * 64);
    assert_eq!(net.total_params().unwrap(), params);
    assert_eq!(model_bytes(&net).unwrap(), 2 * params);
    assert!(NetSpec::parse("standard 3 3 32 112\nstandard 3 16 8 56\n").is_err());
}
