use std::fs;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use param_mend::benchgen::{random_triple, Triple};
use param_mend::callx::{bind_args, parse_call};
use param_mend::compat::assess_call;
use param_mend::orchestrate::{parse_config, run_with, Command};
use param_mend::par::{self, ExecMode};
use param_mend::parammap::establish_mapping;

fn assess(t: &Triple) -> bool {
    let call = parse_call(&t.call_text).expect("generated call parses");
    let binding = bind_args(&call.args, &t.old).expect("generated call binds");
    assess_call(&establish_mapping(&t.old, &t.new), &binding).overall == param_mend::compat::Overall::Incompatible
}

fn triples(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpus: Vec<Triple> = (0..5000).map(|_| random_triple(&mut rng)).collect();
    let mut group = c.benchmark_group("assess_triples");
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| par::map(mode, &corpus, assess).into_iter().filter(|x| *x).count())
        });
    }
    group.finish();
}

fn project(c: &mut Criterion) {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    for (version, sig) in [("old", "a, b=1, c=2"), ("new", "a, c=2, *, b=1")] {
        let lib = root.join(version).join("lib");
        fs::create_dir_all(&lib).expect("mkdir");
        fs::write(lib.join("__init__.py"), "from .core import *\n").expect("write");
        let defs: String = (0..50).map(|i| format!("def f{i}({sig}):\n    pass\n")).collect();
        fs::write(lib.join("core.py"), defs).expect("write");
    }
    let proj = root.join("proj");
    fs::create_dir_all(&proj).expect("mkdir");
    for file in 0..64 {
        let body: String = (0..50).map(|i| format!("x{i} = lib.f{i}(1, 2, c=3)\n")).collect();
        fs::write(proj.join(format!("m{file}.py")), format!("import lib\n{body}")).expect("write");
    }
    let config = parse_config(&format!(
        "project_path = {}\nlibrary_name = lib\ncurrent_version = 1\ntarget_version = 2\nstatic_only = true\ncurrent_library_source = {}\ntarget_library_source = {}\n",
        proj.display(),
        root.join("old").display(),
        root.join("new").display()
    ))
    .expect("config");
    let mut group = c.benchmark_group("fix_project");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| run_with(&config, Command::Fix, mode).expect("run").rows.len())
        });
    }
    group.finish();
}

criterion_group!(benches, triples, project);
criterion_main!(benches);
