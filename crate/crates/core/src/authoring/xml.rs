//! Device-description XML:
//!
//! ```xml
//! <tim uuid="{32 hex}">
//!   <meta channel_count="1" response_time_ms="100"/>
//!   <channel id="0" kind="sensor" unit_code="2" range_min="-40.0" range_max="125.0"
//!            sample_period_us="100000" warmup_delay_us="0"/>
//!   <name manufacturer="..." model="..." user_name="..."/>
//!   <phy medium="sim_stream" max_payload="64" data_rate_bps="115200"/>
//! </tim>
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use roxmltree::{Document, Node};

use super::description::{channel_path, TimDescription};
use super::template::TedsTemplate;
use super::AuthoringError;
use crate::ident::{parse_uuid_hex, uuid_hex};
use crate::teds::{ChannelKind, Medium, PhyTeds, TransducerChannelTeds, UserTransducerNameTeds};

fn kind_name(kind: ChannelKind) -> &'static str {
    match kind {
        ChannelKind::Sensor => "sensor",
        ChannelKind::Actuator => "actuator",
    }
}

fn medium_name(medium: Medium) -> &'static str {
    match medium {
        Medium::SimStream => "sim_stream",
        Medium::Ble => "ble",
        Medium::Usb => "usb",
    }
}

/// XML 1.0 cannot carry most C0 controls, even as character references.
fn representable(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r') || (c >= ' ' && c != '\u{FFFE}' && c != '\u{FFFF}')
}

fn escape_attr(out: &mut String, value: &str) {
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // literal whitespace would be normalized to spaces by a parser
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

fn element(out: &mut String, indent: &str, name: &str, attrs: &[(&str, String)]) {
    let _ = write!(out, "{indent}<{name}");
    for (k, v) in attrs {
        let _ = write!(out, " {k}=\"");
        escape_attr(out, v);
        out.push('"');
    }
    out.push_str("/>\n");
}

/// Renders the description document after checking every value against its
/// template constraints.
pub fn render_description(desc: &TimDescription) -> Result<String, AuthoringError> {
    desc.check()?;
    for (field, text) in [
        ("/tim/name/manufacturer", &desc.name.manufacturer),
        ("/tim/name/model", &desc.name.model_number),
        ("/tim/name/user_name", &desc.name.user_name),
    ] {
        if let Some(c) = text.chars().find(|&c| !representable(c)) {
            return Err(AuthoringError::constraint(
                field,
                format!("character U+{:04X} cannot be written in XML", c as u32),
            ));
        }
    }
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<tim uuid=\"{}\">", uuid_hex(&desc.uuid));
    element(
        &mut out,
        "  ",
        "meta",
        &[
            ("channel_count", desc.channel_count.to_string()),
            ("response_time_ms", desc.response_time_ms.to_string()),
        ],
    );
    for ch in &desc.channels {
        element(
            &mut out,
            "  ",
            "channel",
            &[
                ("id", ch.channel_id.to_string()),
                ("kind", kind_name(ch.channel_kind).into()),
                ("unit_code", ch.unit_code.to_string()),
                // Debug formatting of f64 is the shortest string that parses back exactly
                ("range_min", format!("{:?}", ch.range_min)),
                ("range_max", format!("{:?}", ch.range_max)),
                ("sample_period_us", ch.sample_period_us.to_string()),
                ("warmup_delay_us", ch.warmup_delay_us.to_string()),
            ],
        );
    }
    element(
        &mut out,
        "  ",
        "name",
        &[
            ("manufacturer", desc.name.manufacturer.clone()),
            ("model", desc.name.model_number.clone()),
            ("user_name", desc.name.user_name.clone()),
        ],
    );
    element(
        &mut out,
        "  ",
        "phy",
        &[
            ("medium", medium_name(desc.phy.medium).into()),
            ("max_payload", desc.phy.max_payload_octets.to_string()),
            ("data_rate_bps", desc.phy.data_rate_bps.to_string()),
        ],
    );
    out.push_str("</tim>\n");
    Ok(out)
}

/// The e-form template as XML: one `<field>` per descriptor.
pub fn render_template(template: &TedsTemplate) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<template class=\"{:02X}\" name=\"{}\" version=\"{}\">",
        template.teds_class.code(),
        template.teds_class.name(),
        template.template_version
    );
    for d in &template.descriptors {
        let mut attrs = vec![
            ("name", d.name.clone()),
            ("type", d.semantic_type.name().to_string()),
            ("required", d.required.to_string()),
        ];
        let c = &d.constraints;
        if let Some(min) = c.min {
            attrs.push(("min", min.to_string()));
        }
        if let Some(max) = c.max {
            attrs.push(("max", max.to_string()));
        }
        if let Some(n) = c.max_octets {
            attrs.push(("max_octets", n.to_string()));
        }
        if !c.allowed.is_empty() {
            attrs.push(("allowed", c.allowed.join(" ")));
        }
        element(&mut out, "  ", "field", &attrs);
    }
    out.push_str("</template>\n");
    out
}

/// Attribute reader for one element; tracks which attributes were consumed
/// so leftovers can be reported.
struct Attrs<'a, 'input> {
    node: Node<'a, 'input>,
    path: String,
    used: Vec<&'static str>,
}

impl<'a, 'input> Attrs<'a, 'input> {
    fn new(node: Node<'a, 'input>, path: String) -> Self {
        Self {
            node,
            path,
            used: Vec::new(),
        }
    }

    fn text(&mut self, name: &'static str) -> Result<&'a str, AuthoringError> {
        self.used.push(name);
        self.node.attribute(name).ok_or_else(|| {
            AuthoringError::schema(
                format!("{}/{name}", self.path),
                "required attribute is missing",
            )
        })
    }

    fn parse<T: FromStr>(&mut self, name: &'static str, what: &str) -> Result<T, AuthoringError> {
        let raw = self.text(name)?;
        raw.trim().parse::<T>().map_err(|_| {
            AuthoringError::schema(
                format!("{}/{name}", self.path),
                format!("{raw:?} is not a valid {what}"),
            )
        })
    }

    fn finish(self) -> Result<(), AuthoringError> {
        if let Some(extra) = self
            .node
            .attributes()
            .find(|a| !self.used.contains(&a.name()))
        {
            return Err(AuthoringError::schema(
                format!("{}/{}", self.path, extra.name()),
                "unexpected attribute",
            ));
        }
        Ok(())
    }
}

fn parse_kind(attrs: &mut Attrs) -> Result<ChannelKind, AuthoringError> {
    let raw = attrs.text("kind")?;
    match raw {
        "sensor" | "0" => Ok(ChannelKind::Sensor),
        "actuator" | "1" => Ok(ChannelKind::Actuator),
        _ => Err(AuthoringError::schema(
            format!("{}/kind", attrs.path),
            format!("{raw:?} is not one of sensor, actuator"),
        )),
    }
}

fn parse_medium(attrs: &mut Attrs) -> Result<Medium, AuthoringError> {
    let raw = attrs.text("medium")?;
    match raw {
        "sim_stream" | "0" => Ok(Medium::SimStream),
        "ble" | "1" => Ok(Medium::Ble),
        "usb" | "2" => Ok(Medium::Usb),
        _ => Err(AuthoringError::schema(
            format!("{}/medium", attrs.path),
            format!("{raw:?} is not one of sim_stream, ble, usb"),
        )),
    }
}

/// Parses and validates a device-description document. Structural problems
/// are `SchemaError`s naming the element path; semantic ones are
/// `ConstraintViolation`s.
pub fn parse_description(xml: &str) -> Result<TimDescription, AuthoringError> {
    let doc = Document::parse(xml).map_err(|e| AuthoringError::schema("/", e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "tim" {
        return Err(AuthoringError::schema(
            format!("/{}", root.tag_name().name()),
            "root element must be <tim>",
        ));
    }
    let mut root_attrs = Attrs::new(root, "/tim".into());
    let uuid_raw = root_attrs.text("uuid")?;
    let uuid = parse_uuid_hex(uuid_raw.trim()).ok_or_else(|| {
        AuthoringError::schema("/tim/uuid", format!("{uuid_raw:?} is not 32 hex digits"))
    })?;
    root_attrs.finish()?;

    let mut meta: Option<(u16, u32)> = None;
    let mut channels = Vec::new();
    let mut name: Option<UserTransducerNameTeds> = None;
    let mut phy: Option<PhyTeds> = None;

    for child in root.children() {
        if child.is_text() {
            if child.text().is_some_and(|t| !t.trim().is_empty()) {
                return Err(AuthoringError::schema("/tim", "unexpected text content"));
            }
            continue;
        }
        if !child.is_element() {
            continue;
        }
        if child.has_children()
            && child
                .children()
                .any(|c| c.is_element() || c.text().is_some_and(|t| !t.trim().is_empty()))
        {
            return Err(AuthoringError::schema(
                format!("/tim/{}", child.tag_name().name()),
                "element must be empty",
            ));
        }
        let tag = child.tag_name().name();
        let duplicate =
            || AuthoringError::schema(format!("/tim/{tag}"), "element may appear only once");
        match tag {
            "meta" => {
                if meta.is_some() {
                    return Err(duplicate());
                }
                let mut a = Attrs::new(child, "/tim/meta".into());
                let count = a.parse::<u16>("channel_count", "16-bit unsigned integer")?;
                let response = a.parse::<u32>("response_time_ms", "32-bit unsigned integer")?;
                a.finish()?;
                meta = Some((count, response));
            }
            "channel" => {
                let mut a = Attrs::new(child, channel_path(channels.len()));
                let ch = TransducerChannelTeds {
                    channel_id: a.parse("id", "8-bit unsigned integer")?,
                    channel_kind: parse_kind(&mut a)?,
                    unit_code: a.parse("unit_code", "16-bit unsigned integer")?,
                    range_min: a.parse("range_min", "floating-point number")?,
                    range_max: a.parse("range_max", "floating-point number")?,
                    sample_period_us: a.parse("sample_period_us", "32-bit unsigned integer")?,
                    warmup_delay_us: a.parse("warmup_delay_us", "32-bit unsigned integer")?,
                    extensions: vec![],
                };
                a.finish()?;
                channels.push(ch);
            }
            "name" => {
                if name.is_some() {
                    return Err(duplicate());
                }
                let mut a = Attrs::new(child, "/tim/name".into());
                let n = UserTransducerNameTeds {
                    manufacturer: a.text("manufacturer")?.to_string(),
                    model_number: a.text("model")?.to_string(),
                    user_name: a.text("user_name")?.to_string(),
                    extensions: vec![],
                };
                a.finish()?;
                name = Some(n);
            }
            "phy" => {
                if phy.is_some() {
                    return Err(duplicate());
                }
                let mut a = Attrs::new(child, "/tim/phy".into());
                let p = PhyTeds {
                    medium: parse_medium(&mut a)?,
                    max_payload_octets: a.parse("max_payload", "16-bit unsigned integer")?,
                    data_rate_bps: a.parse("data_rate_bps", "32-bit unsigned integer")?,
                    extensions: vec![],
                };
                a.finish()?;
                phy = Some(p);
            }
            other => {
                return Err(AuthoringError::schema(
                    format!("/tim/{other}"),
                    "unexpected element",
                ));
            }
        }
    }

    let (channel_count, response_time_ms) =
        meta.ok_or_else(|| AuthoringError::schema("/tim/meta", "required element is missing"))?;
    if channels.is_empty() {
        return Err(AuthoringError::schema(
            "/tim/channel",
            "at least one channel is required",
        ));
    }
    let desc = TimDescription {
        uuid,
        channel_count,
        response_time_ms,
        channels,
        name: name
            .ok_or_else(|| AuthoringError::schema("/tim/name", "required element is missing"))?,
        phy: phy
            .ok_or_else(|| AuthoringError::schema("/tim/phy", "required element is missing"))?,
    };
    desc.check()?;
    Ok(desc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authoring::create_template;
    use crate::authoring::description::tests::temperature_tim;

    const DOC: &str = r#"<?xml version="1.0"?>
<tim uuid="00112233445566778899aabbccddeeff">
  <meta channel_count="1" response_time_ms="100"/>
  <channel id="0" kind="sensor" unit_code="2" range_min="-40" range_max="125" sample_period_us="100000" warmup_delay_us="0"/>
  <name manufacturer="Acme" model="T1" user_name="hall"/>
  <phy medium="ble" max_payload="64" data_rate_bps="1000000"/>
</tim>"#;

    fn schema_path(r: Result<TimDescription, AuthoringError>) -> String {
        match r {
            Err(AuthoringError::SchemaError { path, .. }) => path,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn parses_well_formed_document() {
        let d = parse_description(DOC).unwrap();
        assert_eq!(d.channels.len(), 1);
        assert_eq!(d.channels[0].range_min, -40.0);
        assert_eq!(d.phy.medium, Medium::Ble);
        assert_eq!(d.name.model_number, "T1");
    }

    #[test]
    fn one_channel_renders_one_channel_element() {
        let xml = render_description(&temperature_tim(1)).unwrap();
        assert_eq!(xml.matches("<channel ").count(), 1);
        assert_eq!(parse_description(&xml).unwrap(), temperature_tim(1));
    }

    #[test]
    fn zero_channel_count_rejected_on_render() {
        let mut d = temperature_tim(1);
        d.channel_count = 0;
        match render_description(&d) {
            Err(AuthoringError::ConstraintViolation { field, .. }) => {
                assert!(field.ends_with("channel_count"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_uuid_is_schema_error() {
        let doc = DOC.replace(r#" uuid="00112233445566778899aabbccddeeff""#, "");
        assert_eq!(schema_path(parse_description(&doc)), "/tim/uuid");
    }

    #[test]
    fn structural_errors_carry_paths() {
        assert_eq!(
            schema_path(parse_description(&DOC.replace(
                "<meta channel_count=\"1\" response_time_ms=\"100\"/>",
                ""
            ))),
            "/tim/meta"
        );
        assert_eq!(
            schema_path(parse_description(
                &DOC.replace("unit_code=\"2\"", "unit_code=\"x\"")
            )),
            "/tim/channel[1]/unit_code"
        );
        assert_eq!(
            schema_path(parse_description(&DOC.replace("model=", "modell="))),
            "/tim/name/model"
        );
        assert_eq!(
            schema_path(parse_description(
                &DOC.replace("<phy ", "<phy colour=\"red\" ")
            )),
            "/tim/phy/colour"
        );
        assert_eq!(
            schema_path(parse_description(
                &DOC.replace("kind=\"sensor\"", "kind=\"valve\"")
            )),
            "/tim/channel[1]/kind"
        );
        assert_eq!(schema_path(parse_description("<device/>")), "/device");
        assert_eq!(schema_path(parse_description("<tim")), "/");
        assert_eq!(
            schema_path(parse_description(&DOC.replace("</tim>", "<extra/></tim>"))),
            "/tim/extra"
        );
    }

    #[test]
    fn duplicate_channel_id_is_constraint_violation() {
        let doc = DOC
            .replace("channel_count=\"1\"", "channel_count=\"2\"")
            .replace("<name ", "<channel id=\"0\" kind=\"sensor\" unit_code=\"2\" range_min=\"0\" range_max=\"1\" sample_period_us=\"1\" warmup_delay_us=\"0\"/>\n  <name ");
        match parse_description(&doc) {
            Err(AuthoringError::ConstraintViolation { field, .. }) => {
                assert_eq!(field, "/tim/channel[2]/id")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn awkward_text_survives() {
        let mut d = temperature_tim(1);
        d.name.manufacturer = "A&B <\"quoted\"> 'x'\ttab\nline\r".into();
        d.name.user_name = "  padded  ".into();
        let back = parse_description(&render_description(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        d.name.user_name = "bell\u{7}".into();
        assert!(matches!(
            render_description(&d),
            Err(AuthoringError::ConstraintViolation { .. })
        ));
    }

    #[test]
    fn template_xml() {
        let xml = render_template(&create_template(0x0D).unwrap());
        assert!(xml.contains("<template class=\"0D\" name=\"phy\" version=\"1\">"));
        assert!(xml.contains(
            "name=\"medium\" type=\"enum\" required=\"true\" allowed=\"sim_stream ble usb\""
        ));
        assert!(xml.contains(
            "name=\"max_payload_octets\" type=\"uint\" required=\"true\" min=\"22\" max=\"65535\""
        ));
        let doc = Document::parse(&xml).unwrap();
        assert_eq!(
            doc.root_element()
                .children()
                .filter(|n| n.is_element())
                .count(),
            3
        );
    }
}
