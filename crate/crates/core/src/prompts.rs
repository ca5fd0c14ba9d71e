//! Prompt templates sent to language models and pipeline workers.

use crate::space::ProblemSpec;

const INSIGHT_PROMPT: &str = r#"# Dataset Description
{dataset}

# Dataset Metadata
{metadata}

# Dataset Head
{head}

# Instruction
Propose insights to help improve the performance of the model on this dataset.
The insights should be proposed based on the dataset description with different task types.
Each task type should have at least {m} insights.
Make sure each method is diverse enough and can be implemented separately.
Be specific about models' choices, ensemble and tuning techniques, and preprocessing & feature engineering techniques.

# Format
```json
[
    {
        "task_type": "EDA",
        "insights": [
            "insight1",
            "insight2",
            "insight3",
            ...
            "insightN"
        ]   
    },
    {
        "task_type": "Data Preprocessing",
        "insights": [
            "insight1",
            "insight2",
            "insight3",
            ...
            "insightN"
        ]   
    },
    {
        "task_type": "Feature Engineering",
        "insights": [
            "insight1",
            "insight2",
            "insight3",
            ...
            "insightN"
        ]   
    },
    {
        "task_type": "Model Training",
        "insights": [
            "insight1",
            "insight2",
            "insight3",
            ...
            "insightN"
        ]   
    }
]
```
"#;

const TASK_PROMPT: &str = r#"# User requirement
This is a {datasetname} dataset. 
Your goal is to predict the target column `{target_col}`.
Perform data analysis, data preprocessing, feature engineering, and modeling to predict the target. Report {metric} on the eval data. Do not plot or make any visualizations.

# Data dir
train set (with labels): {train_path}
dev set (with labels): {dev_path}
test set (without labels): {test_path}
dataset description: {data_info_path} 
(During EDA, you can use this file 
to get additional information about the dataset)
"#;

const WORKER_INSTRUCTION: &str = r#"## Attention
1. Please do not leak the target label in any form during training.
2. Test set does not have the target column.
3. When conducting data exploration or analysis, print out the results of your findings.
4. You should perform transformations on train, dev, and test sets at the same time (it's a good idea to define functions for this and avoid code repetition).
5. When scaling or transforming features, make sure the target column is not included.
6. You could utilize dev set to validate and improve model training. {special_instruction}

## Saving Dev and Test Predictions
1. Save the prediction results of BOTH the dev set and test set in `dev_predictions.csv` and `test_predictions.csv` respectively in the output directory. 
- Both files should contain a single column named `target` with the predicted values.
2. Make sure the prediction results are in the same format as the target column in the training set. 
- For instance, if the target column is categorical, the prediction results should be categorical as well.

## Output Performance
Print the train and dev set performance in the last step.

# Output dir
{output_dir}
"#;

/// Substitutes `{key}` placeholders in order.
fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    pairs.iter().fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// Insight proposal prompt asking for at least `m` insights per task type.
pub fn insight_prompt(problem: &ProblemSpec, m: usize) -> String {
    fill(
        INSIGHT_PROMPT,
        &[
            ("dataset", &problem.description),
            ("metadata", &problem.dataset_info.metadata),
            ("head", &problem.dataset_info.head),
            ("m", &m.to_string()),
        ],
    )
}

/// Base requirement handed to a worker before any stage instruction.
pub fn task_prompt(problem: &ProblemSpec) -> String {
    let path = |f: fn(&crate::space::DatasetPaths) -> &std::path::Path| {
        problem.paths.as_ref().map(|p| f(p).display().to_string()).unwrap_or_default()
    };
    fill(
        TASK_PROMPT,
        &[
            ("datasetname", &problem.name),
            ("target_col", &problem.target_column),
            ("metric", problem.metric.prompt_name()),
            ("train_path", &path(|p| &p.train)),
            ("dev_path", &path(|p| &p.dev)),
            ("test_path", &path(|p| &p.test)),
            ("data_info_path", &path(|p| &p.data_info)),
        ],
    )
}

/// Attention rules and prediction-file contract appended to worker tasks.
pub fn worker_instruction(output_dir: &str, special_instruction: &str) -> String {
    fill(
        WORKER_INSTRUCTION,
        &[("special_instruction", special_instruction), ("output_dir", output_dir)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::MetricKind;
    use crate::space::{DatasetInfo, DatasetPaths};

    fn problem() -> ProblemSpec {
        ProblemSpec {
            name: "gesture".into(),
            description: "Gesture phase segmentation".into(),
            dataset_info: DatasetInfo { metadata: "rows: 9873".into(), head: "a,b\n1,2".into() },
            paths: Some(DatasetPaths {
                train: "/d/train.csv".into(),
                dev: "/d/dev.csv".into(),
                test: "/d/test.csv".into(),
                data_info: "/d/info.txt".into(),
            }),
            target_column: "Phase".into(),
            metric: MetricKind::F1Weighted,
        }
    }

    #[test]
    fn task_prompt_fills_every_field() {
        let p = task_prompt(&problem());
        assert!(p.contains("This is a gesture dataset."));
        assert!(p.contains("target column `Phase`"));
        assert!(p.contains("Report f1 weighted on the eval data"));
        assert!(p.contains("dev set (with labels): /d/dev.csv"));
        assert!(p.contains("dataset description: /d/info.txt"));
        assert!(!p.contains('{'));
    }

    #[test]
    fn insight_prompt_requests_floor() {
        let p = insight_prompt(&problem(), 5);
        assert!(p.contains("at least 5 insights"));
        assert!(p.contains("\"task_type\": \"Model Training\""));
        assert!(p.contains("# Dataset Head\na,b\n1,2"));
    }

    #[test]
    fn worker_instruction_names_prediction_files() {
        let p = worker_instruction("/out", "");
        assert!(p.contains("single column named `target`"));
        assert!(p.ends_with("# Output dir\n/out\n"));
    }
}
