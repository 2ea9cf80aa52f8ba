//! Shared fixtures for the benchmarks: a desk-scale teacher, student and
//! synthetic corpus built the same way the CLI builds them.

use corrkd::corpus::{synthetic_corpus, SynthConfig};
use corrkd::dsp::AudioBuffer;
use corrkd::models::{init_student_from_teacher, EncoderConfig, HeadInit, StudentModel, TeacherModel};
use corrkd::trainer::TrainingConfig;

pub struct Fixture {
    pub config: TrainingConfig,
    pub teacher: TeacherModel,
    pub student: StudentModel,
    pub corpus: Vec<AudioBuffer>,
}

pub fn fixture() -> Fixture {
    let config = TrainingConfig::default();
    let teacher = TeacherModel::new(EncoderConfig::teacher()).expect("default teacher");
    let student = init_student_from_teacher(&teacher, HeadInit::Uniform, 0).expect("student");
    let corpus = synthetic_corpus(&SynthConfig {
        n_utterances: 32,
        seed: 0,
        ..Default::default()
    })
    .expect("corpus");
    Fixture {
        config,
        teacher,
        student,
        corpus,
    }
}
