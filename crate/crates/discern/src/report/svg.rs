//! Static SVG bar chart, written directly with no plotting dependency.
//!
//! One panel per report: grouped bars per model showing `D_avg`, `D_min`,
//! `D_ew_avg`, and `D_ew_min`, with a red reference line at `D = 1`, the
//! significance threshold.

use super::BenchmarkReport;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;

const SERIES: [(&str, &str); 4] = [
    ("D_avg", "#4878d0"),
    ("D_min", "#ee854a"),
    ("D_ew_avg", "#6acc64"),
    ("D_ew_min", "#d65f5f"),
];

pub fn chart_svg(report: &BenchmarkReport) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let values: Vec<[f64; 4]> = report
        .models
        .iter()
        .map(|m| {
            [
                m.discernment.d_avg,
                m.discernment.d_min,
                m.discernment.d_ew_avg,
                m.discernment.d_ew_min,
            ]
        })
        .collect();
    let max_value = values
        .iter()
        .flatten()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1.2);
    let y_max = (max_value * 1.15 * 2.0).ceil() / 2.0;
    let y = |v: f64| MARGIN_TOP + plot_h * (1.0 - v / y_max);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str("<style>text { font-family: sans-serif; }</style>\n");
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">Discernment scores: {} ({})</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        xml_escape(&report.dataset),
        report.task
    ));

    // axes
    s.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    s.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h
    ));

    // y ticks every 0.5
    let mut tick = 0.0;
    while tick <= y_max + 1e-9 {
        let ty = y(tick);
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ty:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{ty:.2}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{tick:.1}</text>\n",
            MARGIN_LEFT - 8.0,
            ty + 4.0
        ));
        tick += 0.5;
    }
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">D</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // grouped bars
    let group_w = plot_w / report.models.len().max(1) as f64;
    let bar_w = (group_w * 0.8) / SERIES.len() as f64;
    for (gi, (model, vals)) in report.models.iter().zip(&values).enumerate() {
        let gx = MARGIN_LEFT + gi as f64 * group_w + group_w * 0.1;
        for (si, ((label, color), v)) in SERIES.iter().zip(vals).enumerate() {
            let x = gx + si as f64 * bar_w;
            let top = y(*v);
            let h = MARGIN_TOP + plot_h - top;
            s.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{color}\"><title>{}: {label} = {v}</title></rect>\n",
                xml_escape(&model.model)
            ));
        }
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            gx + group_w * 0.4,
            MARGIN_TOP + plot_h + 18.0,
            xml_escape(&model.model)
        ));
    }

    // significance threshold
    s.push_str(&format!(
        "<line class=\"ref-line\" x1=\"{MARGIN_LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"red\" stroke-width=\"1.5\" stroke-dasharray=\"6,3\"/>\n",
        y(1.0),
        MARGIN_LEFT + plot_w,
        y(1.0)
    ));
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"red\">D = 1</text>\n",
        MARGIN_LEFT + plot_w + 6.0,
        y(1.0) + 4.0
    ));

    // legend
    for (i, (label, color)) in SERIES.iter().enumerate() {
        let ly = MARGIN_TOP + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 24.0;
        s.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            ly
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{label}</text>\n",
            lx + 18.0,
            ly + 10.0
        ));
    }

    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
