use pathqa_autodiff::AutodiffError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record is missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has the wrong type: expected {expected}")]
    FieldType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("sample `{0}` has no candidates")]
    EmptyCandidates(String),
    #[error("sample `{0}` has no supporting documents")]
    EmptySupports(String),
    #[error("sample `{0}` has an empty query")]
    EmptyQuery(String),
    #[error("answer `{answer}` is not among the candidates of sample `{id}`")]
    AnswerNotCandidate { id: String, answer: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("node {0} has no neighbours")]
    IsolatedNode(usize),
    #[error("graph has no candidate nodes")]
    NoCandidateNodes,
    #[error("answer `{0}` has no mention node in the graph")]
    AnswerNotInGraph(String),
    #[error("every question position is masked")]
    AllMasked,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("embedding file line {line}: {message}")]
    Embeddings { line: usize, message: String },
    #[error("vocabulary of {vocab_size} names cannot supply {needed} distinct words per sample; raise vocab_size")]
    VocabExhausted { needed: usize, vocab_size: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_line(self, line: usize) -> Self {
        Error::Line {
            line,
            source: Box::new(self),
        }
    }
}
