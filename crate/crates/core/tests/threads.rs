// Own binary: it sets the thread-count variable, which is process global.

use lcap_core::contour::TraceConfig;
use lcap_core::engine::{run_samples, Selection, THREADS_ENV};
use lcap_core::process::{ProcessSpec, Scheme};
use lcap_core::{ChannelParams, Region};

#[test]
fn results_do_not_depend_on_thread_count() {
    let spec = ProcessSpec::new(Scheme::Coloring { d: 25.0 }, Region::square(2000.0).unwrap(), 5).unwrap();
    let channel = ChannelParams::new(10.0, 4.0).unwrap();
    let trace = TraceConfig::for_spacing(25.0);
    let run = |threads: &str| {
        std::env::set_var(THREADS_ENV, threads);
        run_samples(&spec, &channel, 12, &trace, Selection::default()).unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert_eq!(one, four);

    std::env::set_var(THREADS_ENV, "zero");
    assert!(run_samples(&spec, &channel, 1, &trace, Selection::default()).is_err());
}
