use std::sync::Arc;

use uvk_core::bench::{exhaustive_search, gen_sequence, SequenceSpec};
use uvk_core::frame::extract_patch;
use uvk_core::pipeline::{Job, Pipeline, PipelineConfig, PipelineError};

#[test]
fn parallel_search_matches_sequential() {
    let mut spec = SequenceSpec::reference(2);
    spec.path.truncate(24);
    let (frames, _) = gen_sequence(&spec).unwrap();
    let template = Arc::new(extract_patch(&frames[0], spec.start, 15).unwrap());
    let expected: Vec<_> = frames
        .iter()
        .map(|f| exhaustive_search(&template, f).unwrap())
        .collect();

    for workers in [1, 3] {
        let t = Arc::clone(&template);
        let stage = move |job: &Job| exhaustive_search(&t, &job.frame).unwrap();
        let mut pipeline = Pipeline::start(PipelineConfig::new(workers, 4, stage)).unwrap();
        let producer = pipeline.producer();
        let input = frames.clone();
        let feeder = std::thread::spawn(move || {
            for frame in input {
                producer.submit(frame).unwrap();
            }
            producer.close();
        });
        let mut got = Vec::new();
        loop {
            match pipeline.next_result() {
                Ok(r) => {
                    assert_eq!(r.seq as usize, got.len());
                    got.push(r.payload);
                }
                Err(PipelineError::Drained) => break,
                Err(e) => panic!("{e}"),
            }
        }
        feeder.join().unwrap();
        let (stats, rest) = pipeline.shutdown().unwrap();
        assert!(rest.is_empty());
        assert_eq!(stats.jobs, frames.len() as u64);
        assert_eq!(got, expected);
    }
}
