#![no_main]

use libfuzzer_sys::fuzz_target;
use netsir::model::Trajectory;

fuzz_target!(|data: &[u8]| {
    let Ok(traj) = Trajectory::read_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    traj.write_csv(&mut out)
        .expect("writing to memory succeeds");
    let again = Trajectory::read_csv(out.as_slice()).expect("written trajectory parses");
    assert_eq!(again.times.len(), traj.times.len());
});
