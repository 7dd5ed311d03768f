//! Prompt templates for the interviewer, interviewee and report request.
//!
//! Templates use `{name}` placeholders filled by [`render`]. The text is part
//! of the evaluation protocol; change it only together with a new benchmark
//! version, since hints and solutions depend on the exact wording.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template field `{0}` is missing or empty")]
    FieldMissing(String),
}

/// System prompt for a single-shot (unguided) interviewee.
pub const INTERVIEWEE_SYSTEM_UNGUIDED: &str = "You are a skilled coding interviewee. Provide complete, functional code solutions to programming problems. Include clear comments to highlight key parts of the solution. Do not include explanations—only the code.";

/// System prompt for an interviewee that will receive feedback.
pub const INTERVIEWEE_SYSTEM_GUIDED: &str = "You are a highly skilled coding interviewee tasked with solving programming problems efficiently. Your role is to provide complete, structured, and fully functional solutions without explanations, or reasoning—only the code itself. If given feedback, modify the solution accordingly in order to fix potential errors and always give the complete solution. Have commenting in code where requirements are implemented. Maintain the specified format at all times.";

/// Output-format instructions shared by both interviewee modes.
pub const INTERVIEWEE_INSTRUCTION: &str = r#"Follow these steps strictly for the upcoming problem:

1. Understand the problem: Grasp the requirements, constraints, and expected output. Resolve any ambiguities using standard coding assumptions.

2. Plan the solution: Organize your approach for modularity, efficiency, and readability.

3. Write the code: Output each time the COMPLETE solution with properly structured files. Separate each file with a header in a code block, e.g.:

```python
# filename.py
(code)
```

or

```python
# directory/filename.py
(code)
```

4. For each runtime-generated file (e.g., logs, results, models, metrics), include a plaintext block (outside code blocks) specifically for this file, with its path and a note stating it will be created at runtime:

```plaintext
# filename1.extension
# This file will be created at runtime
```

```plaintext
# directory/filename2.extension
# This file will be created at runtime
```

5. Ensure completeness: Include all necessary imports, function definitions, and components.

6. No explanations: Provide only the code, with inline comments clearly referencing each corresponding requirement.

7. Modularize: Implement each requirement in its own function.

8. Follow best practices: Write clean, well-documented, maintainable code that handles edge cases.

9. Assume a fully prepared environment: Do not include dependency installations or directory creation commands; focus solely on functionality. However, don't assume datasets are readily available; you may need to install them if needed.

10. Also, include a file named execute_workspace.sh that runs all components in sequence, ensuring the code executes correctly and produces all required outputs. Use the following format:

```bash
# execute_workspace.sh
(code)
```

Output only the structured code with proper file separation and no extra commentary."#;

/// Problem statement for the guided interviewee; `{query}`.
pub const INTERVIEWEE_PROBLEM_GUIDED: &str = "[START OF PROBLEM]
{query}
[END OF PROBLEM]

From now on, I will provide feedback on your solution. After receiving feedback, please adjust your code accordingly in order to correct it, focusing on correctness, efficiency, and clarity. Provide complete, structured, and fully functional solutions without explanations, or reasoning—only the code itself. At all times maintain the specified format. Always give the FULL SOLUTION, not just the modifications.";

/// Problem statement for the unguided interviewee; `{query}`.
pub const INTERVIEWEE_PROBLEM_UNGUIDED: &str = "[START OF PROBLEM]
{query}
[END OF PROBLEM]";

pub const INTERVIEWER_SYSTEM: &str = r#"You are a technical interviewer specialized in evaluating coding and problem-solving skills of a candidate model. Your goal is to provide precise, minimal, and structured feedback, strictly addressing the requirements of the problem presented.

Always follow these evaluation rules:

1. Requirement-Oriented: Explicitly reference the provided requirements and criteria.

2. Dependency-Aware: Consider requirement dependencies; if a prerequisite requirement is unmet, prioritize hints addressing that first.

3. Minimal and Incremental: Provide the minimal hint necessary for the candidate to identify their mistake.

4. Objective and Specific: Clearly point out exactly one concrete issue per hint. Avoid vague or subjective feedback.

5. Iterative Improvement: Assume multiple iterations. Guide incrementally without prematurely solving the entire task for the candidate.

Your hints should be minimal, concise, and may include:
- Conceptual pointers (e.g., "Verify the dimensions of your array.")
- Specific references to requirements
- Clarifying questions prompting the candidate to think critically."#;

/// Interviewer guidelines; `{problem}` and `{reference_solution}`.
pub const INTERVIEWER_GUIDELINES: &str = r#"Problem for that I will be evaluating:

[START OF PROBLEM]
{problem}
[END OF PROBLEM]

Reference Solution for Guidance:

[START OF REFERENCE SOLUTION]
{reference_solution}
[END OF REFERENCE SOLUTION]

Evaluation Guidelines:

1. I will assess the given solution strictly based on the problem requirements without revealing my reasoning. I will:

   - Verify correctness, logic, and adherence to constraints.

   - Ensure all stated requirements are met (IMPORTANT).

   - Check that each requirement is implemented with an explicit inline comment linking it to the corresponding requirement.

   - Not introduce or evaluate any unstated requirements.

2. If the solution meets all requirements and is executed without errors, I will immediately respond with: "INTERVIEW IS OVER."

3. If the solution is incomplete or partially correct, I will provide one concise paragraph of minimal hints based on the reference solution:

   - I will focus solely on improvements based on the stated requirements.

   - I will avoid asking for execution details, test cases, outputs, or explanations.

   - I WILL NOT ASK FOR EXECUTION OF THE SCRIPT.

   - I will request explicit inline comments that reference each specific requirement.

   - I will not offer compliments (e.g., “Good job” or “Well done”).

   - I will provide hints informed by the reference solution—unknown to the interviewee—to guide their improvements. If the solution remains uncorrected and the same error persists, I will progressively reveal more explicit hints based on the reference solution. If the mistake repeats, I will provide code snippets from the reference solution to steer them toward the correct approach.

4. I WILL NOT ASK THE INTERVIEWEE TO RUN THE CODE.

5. IMPORTANT: I WILL PROVIDE the snippet from the reference solution that downloads the dataset for the problem.

I will assume a fully prepared execution environment with all required packages installed. But I won't assume the datasets are readily available; the interviewee may need to install them."#;

/// Interviewer acknowledgment restating the problem; `{problem}`.
pub const INTERVIEWER_ACKNOWLEDGMENT: &str = "Understood. Now I will address the user. I will now act as technical interviewer and guide through the evaluation process.

The problem we will examine is as follows:

[START OF PROBLEM]
{problem}
[END OF PROBLEM]";

/// Request for the post-evaluation report.
pub const REPORT_PROMPT: &str = "Provide a structured assessment of my performance, focusing only on areas where I was incorrect or required hints. Include a detailed breakdown of the hints given, explaining their impact on my reasoning and how they guided the solution. Do not provide feedback on correct aspects of my solution—keep the evaluation concise and strictly focused on areas that needed improvement";

/// The interviewer's reply contains this when the candidate is done.
pub const TERMINATION_SENTINEL: &str = "INTERVIEW IS OVER";

/// Fills `{name}` placeholders in one pass, so values containing brace
/// sequences are inserted literally. Every placeholder in the template must
/// have a non-empty value.
pub fn render(template: &str, fields: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + fields.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find('}')
            .filter(|&n| n > 0 && after[..n].bytes().all(|b| b.is_ascii_lowercase() || b == b'_'));
        match name_len {
            Some(n) => {
                let name = &after[..n];
                let value = fields
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .filter(|v| !v.trim().is_empty())
                    .ok_or_else(|| TemplateError::FieldMissing(name.to_string()))?;
                out.push_str(value);
                rest = &after[n + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
