//! Splits drained requests into volunteers and perishable / non-perishable
//! donors and receivers.

use alloc::vec::Vec;

use crate::domain::{
    DonationRequest, FoodTaxonomy, Perishability, Request, RequestId, RequirementRequest,
    VolunteerRequest,
};

/// The five working lists, each in arrival order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassifiedLists {
    pub v: Vec<VolunteerRequest>,
    pub pfd: Vec<DonationRequest>,
    pub pfr: Vec<RequirementRequest>,
    pub npfd: Vec<DonationRequest>,
    pub npfr: Vec<RequirementRequest>,
}

impl ClassifiedLists {
    pub fn len(&self) -> usize {
        self.v.len() + self.pfd.len() + self.pfr.len() + self.npfd.len() + self.npfr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.v
            .iter()
            .map(|r| r.id)
            .chain(self.pfd.iter().map(|r| r.id))
            .chain(self.pfr.iter().map(|r| r.id))
            .chain(self.npfd.iter().map(|r| r.id))
            .chain(self.npfr.iter().map(|r| r.id))
    }

    pub fn donors(&self, class: Perishability) -> &Vec<DonationRequest> {
        match class {
            Perishability::Perishable => &self.pfd,
            Perishability::NonPerishable => &self.npfd,
        }
    }

    pub fn receivers(&self, class: Perishability) -> &Vec<RequirementRequest> {
        match class {
            Perishability::Perishable => &self.pfr,
            Perishability::NonPerishable => &self.npfr,
        }
    }

    pub(crate) fn take_class(
        &mut self,
        class: Perishability,
    ) -> (Vec<DonationRequest>, Vec<RequirementRequest>) {
        match class {
            Perishability::Perishable => {
                (core::mem::take(&mut self.pfd), core::mem::take(&mut self.pfr))
            }
            Perishability::NonPerishable => {
                (core::mem::take(&mut self.npfd), core::mem::take(&mut self.npfr))
            }
        }
    }

    pub(crate) fn put_class(
        &mut self,
        class: Perishability,
        donors: Vec<DonationRequest>,
        receivers: Vec<RequirementRequest>,
    ) {
        match class {
            Perishability::Perishable => {
                self.pfd = donors;
                self.pfr = receivers;
            }
            Perishability::NonPerishable => {
                self.npfd = donors;
                self.npfr = receivers;
            }
        }
    }
}

/// Appends every snapshot request to exactly one list after the carried-over
/// entries of that list.
pub fn trifurcate(
    snapshot: Vec<Request>,
    mut carry: ClassifiedLists,
    taxonomy: &FoodTaxonomy,
) -> ClassifiedLists {
    for request in snapshot {
        match request {
            Request::Volunteer(v) => carry.v.push(v),
            Request::Donation(d) => match taxonomy.perishability(d.food) {
                Perishability::Perishable => carry.pfd.push(d),
                Perishability::NonPerishable => carry.npfd.push(d),
            },
            Request::Requirement(r) => match taxonomy.perishability(r.food) {
                Perishability::Perishable => carry.pfr.push(r),
                Perishability::NonPerishable => carry.npfr.push(r),
            },
        }
    }
    carry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ArrivalSeq, FoodType, Location, TimeWindow};
    use crate::geometry::Route;
    use alloc::collections::BTreeSet;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    fn donor(agent: u64, food: FoodType) -> Request {
        Request::Donation(DonationRequest {
            id: RequestId::new(agent, 1),
            arrival: ArrivalSeq(agent),
            location: Location::default(),
            food,
            amount: 1000,
            packaging: String::new(),
            prep_or_expiry: 0,
            image_ref: String::new(),
            window: TimeWindow::new(0, 10),
            preferred_receivers: vec![],
            vicinity: 0.0,
        })
    }

    fn receiver(agent: u64, food: FoodType) -> Request {
        Request::Requirement(RequirementRequest {
            id: RequestId::new(agent, 1),
            arrival: ArrivalSeq(agent),
            location: Location::default(),
            food,
            amount: 1000,
            allocated: 0,
            window: TimeWindow::new(0, 10),
            preferred_donors: vec![],
        })
    }

    fn volunteer(agent: u64) -> Request {
        Request::Volunteer(VolunteerRequest {
            id: RequestId::new(agent, 1),
            arrival: ArrivalSeq(agent),
            route: Route::new(Location::new(0.0, 0.0), Location::new(1.0, 0.0)),
            motored: true,
            ac: false,
            payload_capacity: 10_000,
            committed: 0,
            window: TimeWindow::new(0, 10),
            receivers: vec![],
        })
    }

    #[test]
    fn routes_each_request_to_its_list() {
        let tax = FoodTaxonomy::default();
        let out = trifurcate(
            vec![
                volunteer(1),
                donor(2, FoodType::FreshlyCooked),
                receiver(3, FoodType::PackagedSolid),
                donor(4, FoodType::PackagedLiquid),
                receiver(5, FoodType::Mixed),
            ],
            ClassifiedLists::default(),
            &tax,
        );
        assert_eq!(out.v.len(), 1);
        assert_eq!(out.pfd[0].id.agent, 2);
        assert_eq!(out.npfr[0].id.agent, 3);
        assert_eq!(out.npfd[0].id.agent, 4);
        assert_eq!(out.pfr[0].id.agent, 5);
    }

    #[test]
    fn empty_snapshot_is_identity() {
        let tax = FoodTaxonomy::default();
        let carry = trifurcate(
            vec![donor(1, FoodType::FreshlyCooked), volunteer(2)],
            ClassifiedLists::default(),
            &tax,
        );
        assert_eq!(trifurcate(vec![], carry.clone(), &tax), carry);
    }

    #[test]
    fn carry_precedes_new_entries() {
        let tax = FoodTaxonomy::default();
        let carry = trifurcate(vec![donor(9, FoodType::FreshlyCooked)], Default::default(), &tax);
        let out = trifurcate(vec![donor(1, FoodType::FreshlyCooked)], carry, &tax);
        let order: Vec<u64> = out.pfd.iter().map(|d| d.id.agent).collect();
        assert_eq!(order, vec![9, 1]);
    }

    proptest! {
        #[test]
        fn no_loss_no_duplication(kinds in proptest::collection::vec((0u8..3, 0usize..8), 0..60),
                                  split in 0usize..60) {
            let tax = FoodTaxonomy::default();
            let reqs: Vec<Request> = kinds.iter().enumerate().map(|(i, (k, f))| {
                let agent = i as u64 + 1;
                match k {
                    0 => volunteer(agent),
                    1 => donor(agent, FoodType::ALL[*f]),
                    _ => receiver(agent, FoodType::ALL[*f]),
                }
            }).collect();
            let cut = split.min(reqs.len());
            let (first, second) = reqs.split_at(cut);
            let carry = trifurcate(first.to_vec(), Default::default(), &tax);
            let out = trifurcate(second.to_vec(), carry, &tax);
            prop_assert_eq!(out.len(), reqs.len());
            let ids: BTreeSet<RequestId> = out.ids().collect();
            prop_assert_eq!(ids.len(), reqs.len());
            // stable: each list is in ascending arrival order
            prop_assert!(out.pfd.windows(2).all(|w| w[0].arrival < w[1].arrival));
            prop_assert!(out.npfr.windows(2).all(|w| w[0].arrival < w[1].arrival));
            prop_assert!(out.v.windows(2).all(|w| w[0].arrival < w[1].arrival));
        }
    }
}
