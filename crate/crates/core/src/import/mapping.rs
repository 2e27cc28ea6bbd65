use serde::{Deserialize, Serialize};

/// How framework trace-event categories and argument keys map onto bundle
/// sections. The JSON file form uses these field names; missing fields keep
/// the defaults, which follow the framework profiler's usual output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameworkMapping {
    pub version: String,
    pub supported_schema_versions: Vec<u64>,
    pub framework_op_categories: Vec<String>,
    pub runtime_categories: Vec<String>,
    pub kernel_categories: Vec<String>,
    pub nvtx_categories: Vec<String>,
    /// Tried in order; the first present key wins.
    pub correlation_keys: Vec<String>,
    pub grid_key: String,
    pub block_key: String,
    pub stream_key: String,
    pub shapes_key: String,
    pub dtypes_key: String,
    pub concrete_inputs_key: String,
}

impl Default for FrameworkMapping {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        FrameworkMapping {
            version: "framework-mapping/1".into(),
            supported_schema_versions: vec![1],
            framework_op_categories: v(&["cpu_op", "python_function"]),
            runtime_categories: v(&["cuda_runtime", "cuda_driver"]),
            kernel_categories: v(&["kernel"]),
            nvtx_categories: v(&["user_annotation", "gpu_user_annotation_host", "nvtx"]),
            correlation_keys: v(&["correlation", "correlation id", "correlationId"]),
            grid_key: "grid".into(),
            block_key: "block".into(),
            stream_key: "stream".into(),
            shapes_key: "Input Dims".into(),
            dtypes_key: "Input type".into(),
            concrete_inputs_key: "Concrete Inputs".into(),
        }
    }
}

impl FrameworkMapping {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
