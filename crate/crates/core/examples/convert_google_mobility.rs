//! Converts a Google Community Mobility Report CSV into the long format read
//! by the pipeline (`country,date,category,pct_change`).
//!
//!     cargo run -p si-core --example convert_google_mobility -- Global_Mobility_Report.csv mobility.csv
//!
//! Only national rows are kept (no sub-region or metro area). Empty cells are
//! skipped, so a missing value stays missing rather than becoming zero.

use std::error::Error;

const COLUMNS: [(&str, &str); 6] = [
    ("retail_and_recreation_percent_change_from_baseline", "retail_and_recreation"),
    ("grocery_and_pharmacy_percent_change_from_baseline", "grocery_and_pharmacy"),
    ("parks_percent_change_from_baseline", "parks"),
    ("transit_stations_percent_change_from_baseline", "transit_stations"),
    ("workplaces_percent_change_from_baseline", "workplaces"),
    ("residential_percent_change_from_baseline", "residential"),
];

fn main() -> Result<(), Box<dyn Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [input, output] = args.as_slice() else {
        return Err("usage: convert_google_mobility <report.csv> <out.csv>".into());
    };

    let mut reader = csv::Reader::from_path(input)?;
    let headers = reader.headers()?.clone();
    let index = |name: &str| headers.iter().position(|h| h == name).ok_or(format!("missing column `{name}`"));
    let country = index("country_region")?;
    let date = index("date")?;
    let regional: Vec<usize> = ["sub_region_1", "sub_region_2", "metro_area"]
        .iter()
        .filter_map(|c| index(c).ok())
        .collect();
    let values: Vec<(usize, &str)> = COLUMNS
        .iter()
        .map(|(col, category)| Ok((index(col)?, *category)))
        .collect::<Result<_, String>>()?;

    let mut writer = csv::Writer::from_path(output)?;
    writer.write_record(["country", "date", "category", "pct_change"])?;
    let (mut kept, mut written) = (0usize, 0usize);
    for record in reader.records() {
        let record = record?;
        if regional.iter().any(|&i| !record.get(i).unwrap_or("").trim().is_empty()) {
            continue;
        }
        kept += 1;
        for &(i, category) in &values {
            let cell = record.get(i).unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            writer.write_record([record[country].trim(), record[date].trim(), category, cell])?;
            written += 1;
        }
    }
    writer.flush()?;
    eprintln!("{kept} national rows, {written} values written to {output}");
    Ok(())
}
