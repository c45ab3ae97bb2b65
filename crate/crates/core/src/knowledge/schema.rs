use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The nine top-level sections of a higher-education syllabus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    CourseInformation,
    FacultyInformation,
    TAInformation,
    CourseGoals,
    CourseCalendar,
    Attendance,
    Grading,
    InstructionalMaterials,
    Policies,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::CourseInformation,
        Category::FacultyInformation,
        Category::TAInformation,
        Category::CourseGoals,
        Category::CourseCalendar,
        Category::Attendance,
        Category::Grading,
        Category::InstructionalMaterials,
        Category::Policies,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Category::CourseInformation => "Course Information",
            Category::FacultyInformation => "Faculty Information",
            Category::TAInformation => "TA Information",
            Category::CourseGoals => "Course Goals",
            Category::CourseCalendar => "Course Calendar",
            Category::Attendance => "Attendance",
            Category::Grading => "Grading",
            Category::InstructionalMaterials => "Instructional Materials",
            Category::Policies => "Policies",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::CourseInformation => "CourseInformation",
            Category::FacultyInformation => "FacultyInformation",
            Category::TAInformation => "TAInformation",
            Category::CourseGoals => "CourseGoals",
            Category::CourseCalendar => "CourseCalendar",
            Category::Attendance => "Attendance",
            Category::Grading => "Grading",
            Category::InstructionalMaterials => "InstructionalMaterials",
            Category::Policies => "Policies",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.display_name() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// Syllabus elements per category. Element keys repeat across categories
/// ("Name", "Office Hours"), so identity is the (category, key) pair.
pub const SCHEMA: &[(Category, &str)] = &[
    (Category::CourseInformation, "Course Name"),
    (Category::CourseInformation, "Course Number"),
    (Category::CourseInformation, "Credit Hours"),
    (Category::CourseInformation, "Location and Class Times"),
    (Category::CourseInformation, "Prerequisites/Co-requisites"),
    (Category::FacultyInformation, "Name"),
    (Category::FacultyInformation, "Contact Information"),
    (Category::FacultyInformation, "Office Location"),
    (Category::FacultyInformation, "Office Hours"),
    (Category::TAInformation, "Name"),
    (Category::TAInformation, "Contact Information"),
    (Category::TAInformation, "Office Location"),
    (Category::TAInformation, "Office Hours"),
    (Category::CourseGoals, "Course Objectives"),
    (Category::CourseGoals, "Expectations from the course"),
    (Category::CourseCalendar, "Due dates"),
    (Category::CourseCalendar, "Assignment dates"),
    (Category::Attendance, "Attendance policy"),
    (Category::Attendance, "Expected Classroom behavior"),
    (Category::Grading, "Grading Criteria"),
    (Category::Grading, "Tentative Exam Schedule"),
    (Category::InstructionalMaterials, "Textbooks"),
    (Category::InstructionalMaterials, "Other required materials for the course"),
    (Category::Policies, "Late Assignments"),
    (Category::Policies, "Academic Dishonesty"),
    (Category::Policies, "Disability Statement"),
    (Category::Policies, "Freedom of Speech"),
    (Category::Policies, "Makeup Policy"),
    (Category::Policies, "Mental Health Resources"),
    (Category::Policies, "Absences for Religious Holy Days"),
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemaElement {
    pub category: Category,
    #[serde(rename = "element")]
    pub key: String,
}

impl SchemaElement {
    /// Looks the pair up in [`SCHEMA`].
    pub fn new(category: Category, key: &str) -> Option<Self> {
        SCHEMA
            .iter()
            .any(|(c, k)| *c == category && *k == key)
            .then(|| Self { category, key: key.to_string() })
    }

    pub fn all() -> impl Iterator<Item = SchemaElement> {
        SCHEMA.iter().map(|(c, k)| SchemaElement { category: *c, key: k.to_string() })
    }
}

impl fmt::Display for SchemaElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.category.display_name(), self.key)
    }
}
