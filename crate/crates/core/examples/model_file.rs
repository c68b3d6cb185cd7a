//! Parse a model file, check it, and print it back in flat form.

use commtdp::eval::evaluate;
use commtdp::model::{classify_communication, classify_observability, parse_model, print_model, validate};
use commtdp::policy::{FnDomainPolicy, SilentPolicy};
use commtdp::model::{ActionId, BeliefState};

const RELAY: &str = r#"
# a scout sees the weather; a pilot decides whether to launch
[features]
Sky = clear storm

[agents]
Scout Pilot

[actions]
Scout = watch
Pilot = launch hold

[messages]
Scout = go
Pilot =

[transition]
factor Sky Scout Pilot -> Sky
. . . -> clear 0.7
. . . -> storm 0.3

[observation]
factor Sky Scout Pilot -> Scout
clear . . -> sunny 0.9
clear . . -> cloudy 0.1
storm . . -> cloudy 0.8
storm . . -> sunny 0.2
factor Sky Scout Pilot -> Pilot
. . . -> nothing 1

[reward_domain]
factor Sky Scout Pilot
clear . launch -> 2
storm . launch -> -5

[reward_comm]
factor Scout
go -> -0.1

[initial]
factor -> Sky
-> clear 0.7
-> storm 0.3

[horizon]
1
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = parse_model(RELAY)?;
    let report = validate(&model);
    println!("valid: {}", report.is_ok());
    println!("states: {}, joint actions: {}", model.state_count(), model.joint_action_count());
    println!("observability: {}", classify_observability(&model));
    println!("communication: {}", classify_communication(&model));

    // the pilot holds without news
    let hold = FnDomainPolicy(|b: &BeliefState| Some(ActionId((b.owner().0 == 1) as u16)));
    println!("value of holding: {}", evaluate(&model, &hold, &SilentPolicy)?.value);

    print!("{}", print_model(&model)?);
    Ok(())
}
