//! Question phrasings per relation. `{M}` is a movie, `{X}` the other
//! endpoint of the relation, `{S}` a plural movie-set description.

use super::{Profile, Rel};

pub(crate) struct RelLex {
    /// Attribute of one movie.
    pub fwd: &'static [&'static str],
    /// Movies having an attribute value.
    pub inv: &'static [&'static str],
    /// Movie-set descriptions, used inside `attr`.
    pub set: &'static [&'static str],
    /// Attribute of a set of movies.
    pub attr: &'static [&'static str],
    /// Movies sharing this attribute with `{M}` (a full question).
    pub same: &'static [&'static str],
    /// Movies sharing this attribute with `{M}` (a set description).
    pub share: &'static [&'static str],
    pub ask: &'static [&'static str],
    pub count_inv: &'static [&'static str],
    pub count_fwd: &'static [&'static str],
}

const A_DIRECTED: RelLex = RelLex {
    fwd: &["who directed {M}", "who is the director of {M}", "{M} was directed by whom", "who was {M} directed by"],
    inv: &["which movies did {X} direct", "what films were directed by {X}", "{X} directed which movies", "movies directed by {X}"],
    set: &["the films directed by {X}", "the movies {X} directed", "the films that {X} directed"],
    attr: &["who directed {S}", "who are the directors of {S}", "{S} were directed by whom"],
    same: &["which films have the same director as {M}", "what movies share a director with {M}", "which movies were directed by the director of {M}"],
    share: &["the films that share directors with {M}", "the movies with the same director as {M}", "the films that have a director in common with {M}"],
    ask: &["did {X} direct {M}", "was {M} directed by {X}", "is {X} the director of {M}"],
    count_inv: &["how many films did {X} direct", "how many movies were directed by {X}", "count the films directed by {X}"],
    count_fwd: &[],
};

const A_STARRED: RelLex = RelLex {
    fwd: &["who starred in {M}", "who acted in {M}", "who are the actors in {M}", "which actors appear in {M}"],
    inv: &["which movies did {X} star in", "what films did {X} act in", "{X} appeared in which movies", "movies starring {X}"],
    set: &["the films starring {X}", "the movies {X} acted in", "the films that {X} appeared in"],
    attr: &["who starred in {S}", "who acted in {S}", "which actors appear in {S}"],
    same: &["which films share an actor with {M}", "what movies have the same actors as {M}", "which movies star the actors of {M}"],
    share: &["the films that share actors with {M}", "the movies with the same actors as {M}", "the films that have an actor in common with {M}"],
    ask: &["did {X} star in {M}", "did {X} act in {M}", "is {X} an actor in {M}"],
    count_inv: &["how many films did {X} star in", "how many movies did {X} act in", "count the films starring {X}"],
    count_fwd: &["how many actors starred in {M}", "how many actors are in {M}"],
};

const A_WRITTEN: RelLex = RelLex {
    fwd: &["who wrote {M}", "who is the writer of {M}", "{M} was written by whom", "who wrote the screenplay for {M}"],
    inv: &["which movies did {X} write", "what films were written by {X}", "{X} wrote which movies", "movies written by {X}"],
    set: &["the films written by {X}", "the movies {X} wrote", "the films that {X} wrote"],
    attr: &["who wrote {S}", "who are the writers of {S}", "{S} were written by whom"],
    same: &["which films have the same writer as {M}", "what movies share a writer with {M}", "which movies were written by the writer of {M}"],
    share: &["the films that share writers with {M}", "the movies with the same writer as {M}", "the films that have a writer in common with {M}"],
    ask: &["did {X} write {M}", "was {M} written by {X}", "is {X} the writer of {M}"],
    count_inv: &["how many films did {X} write", "how many movies were written by {X}", "count the films written by {X}"],
    count_fwd: &["how many writers does {M} have", "how many people wrote {M}"],
};

const A_LANGUAGE: RelLex = RelLex {
    fwd: &["what language is {M} in", "which language was {M} made in", "what is the language of {M}", "{M} is in which language"],
    inv: &["which movies are in {X}", "what films were made in {X}", "list the {X} language movies", "movies in the {X} language"],
    set: &["the films in {X}", "the {X} language movies", "the movies made in {X}"],
    attr: &["what language are {S} in", "{S} are in which language", "which languages are {S} in", "what is the language of {S}"],
    same: &["which films are in the same language as {M}", "what movies share the language of {M}", "which movies were made in the language of {M}"],
    share: &[],
    ask: &["is {M} in {X}", "was {M} made in {X}", "is the language of {M} {X}"],
    count_inv: &["how many films are in {X}", "how many movies were made in {X}", "count the {X} language films"],
    count_fwd: &[],
};

const A_GENRE: RelLex = RelLex {
    fwd: &["what genre is {M}", "what kind of film is {M}", "{M} belongs to which genre", "what is the genre of {M}"],
    inv: &["which movies are {X} films", "what films have the genre {X}", "list the {X} movies", "name some {X} films"],
    set: &["the {X} films", "the movies with genre {X}", "the films in the {X} genre"],
    attr: &["what genres are {S}", "{S} belong to which genres", "what kind of films are {S}", "what is the genre of {S}"],
    same: &["which films have the same genre as {M}", "what movies share the genre of {M}", "which movies are in the genre of {M}"],
    share: &[],
    ask: &["is {M} a {X} film", "does {M} belong to the {X} genre", "is the genre of {M} {X}"],
    count_inv: &["how many {X} films are there", "how many movies have the genre {X}", "count the {X} movies"],
    count_fwd: &[],
};

const A_YEAR: RelLex = RelLex {
    fwd: &["when was {M} released", "what year did {M} come out", "{M} was released in which year", "what is the release year of {M}"],
    inv: &["which movies were released in {X}", "what films came out in {X}", "movies from {X}", "list the films released in {X}"],
    set: &["the films released in {X}", "the movies from {X}", "the films that came out in {X}"],
    attr: &["when were {S} released", "what years did {S} come out", "{S} were released in which years", "what is the release year of {S}"],
    same: &["which films were released in the same year as {M}", "what movies came out the same year as {M}", "which movies share the release year of {M}"],
    share: &[],
    ask: &["was {M} released in {X}", "did {M} come out in {X}", "is the release year of {M} {X}"],
    count_inv: &["how many films were released in {X}", "how many movies came out in {X}", "count the films from {X}"],
    count_fwd: &[],
};

const A_TAGS: RelLex = RelLex {
    fwd: &["what is {M} about", "what topics does {M} cover", "what are the tags of {M}", "what subjects does {M} deal with"],
    inv: &["which movies are about {X}", "what films deal with {X}", "movies tagged {X}", "list the films about {X}"],
    set: &["the films about {X}", "the movies tagged {X}", "the films that deal with {X}"],
    attr: &["what are {S} about", "what topics do {S} cover", "what are the tags of {S}", "what subjects do {S} deal with"],
    same: &["which films are about the same topics as {M}", "what movies share a tag with {M}", "which movies deal with the subjects of {M}"],
    share: &[],
    ask: &["is {M} about {X}", "does {M} deal with {X}", "is {M} tagged {X}"],
    count_inv: &["how many films are about {X}", "how many movies are tagged {X}", "count the films that deal with {X}"],
    count_fwd: &["how many tags does {M} have", "how many topics does {M} cover"],
};

const A_RATING: RelLex = RelLex {
    fwd: &["what is the imdb rating of {M}", "how is {M} rated", "how was {M} rated on imdb", "what rating did {M} get"],
    inv: &["which movies are rated {X}", "what films have an imdb rating of {X}", "movies rated {X} on imdb", "list the films rated {X}"],
    set: &["the films rated {X}", "the movies with an imdb rating of {X}", "the films rated {X} on imdb"],
    attr: &["how are {S} rated", "what are the imdb ratings of {S}", "what rating did {S} get", "how were {S} rated on imdb"],
    same: &["which films have the same imdb rating as {M}", "what movies are rated the same as {M}", "which movies share the rating of {M}"],
    share: &[],
    ask: &["is {M} rated {X}", "does {M} have an imdb rating of {X}", "was {M} rated {X} on imdb"],
    count_inv: &["how many films are rated {X}", "how many movies have an imdb rating of {X}", "count the films rated {X}"],
    count_fwd: &[],
};

const A_VOTES: RelLex = RelLex {
    fwd: &["how popular is {M}", "what are the imdb votes of {M}", "how popular was {M} on imdb", "how well voted is {M}"],
    inv: &["which movies are {X} on imdb", "what films have {X} imdb votes", "movies voted {X} on imdb", "list the films voted {X}"],
    set: &["the films that are {X} on imdb", "the movies with {X} imdb votes", "the films voted {X} on imdb"],
    attr: &["how popular are {S}", "what are the imdb votes of {S}", "how popular were {S} on imdb", "how well voted are {S}"],
    same: &["which films are as popular as {M}", "what movies have the same imdb votes as {M}", "which movies share the vote level of {M}"],
    share: &[],
    ask: &["is {M} {X} on imdb", "does {M} have {X} imdb votes", "was {M} voted {X} on imdb"],
    count_inv: &["how many films are {X} on imdb", "how many movies have {X} imdb votes", "count the films voted {X} on imdb"],
    count_fwd: &[],
};

// The second profile reuses some phrasings and adds ones built on its own
// relation labels.

const B_DIRECTED: RelLex = RelLex {
    fwd: &["who directed {M}", "who is the director of {M}", "name the director of {M}"],
    inv: &["which movies did {X} direct", "what films have {X} as director", "films whose director is {X}"],
    set: &["the films directed by {X}", "the films whose director is {X}", "the movies with director {X}"],
    attr: &["who directed {S}", "who is the director of {S}", "name the director of {S}"],
    same: &["which films have the same director as {M}", "what movies share the director of {M}", "which films have a director in common with {M}"],
    share: &["the films that share directors with {M}", "the films with the same director as {M}", "the movies that share the director of {M}"],
    ask: &["did {X} direct {M}", "is {X} the director of {M}", "is the director of {M} {X}"],
    count_inv: &["how many films did {X} direct", "how many movies have {X} as director", "count the films whose director is {X}"],
    count_fwd: &[],
};

const B_STARRED: RelLex = RelLex {
    fwd: &["who starred in {M}", "who is a cast member of {M}", "name the cast members of {M}"],
    inv: &["which movies did {X} star in", "what films have {X} as a cast member", "films with cast member {X}"],
    set: &["the films starring {X}", "the films with cast member {X}", "the movies that have {X} in the cast"],
    attr: &["who starred in {S}", "who are the cast members of {S}", "name the cast members of {S}"],
    same: &["which films share an actor with {M}", "what movies share a cast member with {M}", "which films have a cast member in common with {M}"],
    share: &["the films that share actors with {M}", "the films that share cast members with {M}", "the movies with a cast member in common with {M}"],
    ask: &["did {X} star in {M}", "is {X} a cast member of {M}", "was {X} in the cast of {M}"],
    count_inv: &["how many films did {X} star in", "how many movies have {X} as a cast member", "count the films with cast member {X}"],
    count_fwd: &["how many actors starred in {M}", "how many cast members does {M} have"],
};

const B_WRITTEN: RelLex = RelLex {
    fwd: &["who wrote {M}", "who is the screenwriter of {M}", "name the screenwriter of {M}"],
    inv: &["which movies did {X} write", "what films have {X} as screenwriter", "films whose screenwriter is {X}"],
    set: &["the films written by {X}", "the films whose screenwriter is {X}", "the movies with screenwriter {X}"],
    attr: &["who wrote {S}", "who is the screenwriter of {S}", "name the screenwriter of {S}"],
    same: &["which films have the same writer as {M}", "what movies share the screenwriter of {M}", "which films have a screenwriter in common with {M}"],
    share: &["the films that share writers with {M}", "the films with the same screenwriter as {M}", "the movies that share the screenwriter of {M}"],
    ask: &["did {X} write {M}", "is {X} the screenwriter of {M}", "is the screenwriter of {M} {X}"],
    count_inv: &["how many films did {X} write", "how many movies have {X} as screenwriter", "count the films whose screenwriter is {X}"],
    count_fwd: &["how many writers does {M} have", "how many screenwriters does {M} have"],
};

const B_LANGUAGE: RelLex = RelLex {
    fwd: &["what language is {M} in", "what is the original language of {M}", "which original language does {M} have"],
    inv: &["which movies are in {X}", "what films have {X} as original language", "films whose original language is {X}"],
    set: &["the films in {X}", "the films whose original language is {X}", "the movies with original language {X}"],
    attr: &["what language are {S} in", "what is the original language of {S}", "which original language do {S} have"],
    same: &["which films are in the same language as {M}", "what movies share the original language of {M}", "which films have the original language of {M}"],
    share: &[],
    ask: &["is {M} in {X}", "is the original language of {M} {X}", "does {M} have {X} as original language"],
    count_inv: &["how many films are in {X}", "how many movies have {X} as original language", "count the films whose original language is {X}"],
    count_fwd: &[],
};

const B_GENRE: RelLex = RelLex {
    fwd: &["what genre is {M}", "what is the genre of {M}", "name the genre of {M}"],
    inv: &["which movies are {X} films", "what films have the genre {X}", "films whose genre is {X}"],
    set: &["the {X} films", "the films whose genre is {X}", "the movies with genre {X}"],
    attr: &["what genres are {S}", "what is the genre of {S}", "name the genre of {S}"],
    same: &["which films have the same genre as {M}", "what movies share the genre of {M}", "which films have the genre of {M}"],
    share: &[],
    ask: &["is {M} a {X} film", "is the genre of {M} {X}", "does {M} have the genre {X}"],
    count_inv: &["how many {X} films are there", "how many movies have the genre {X}", "count the films whose genre is {X}"],
    count_fwd: &[],
};

const B_YEAR: RelLex = RelLex {
    fwd: &["when was {M} released", "what is the publication year of {M}", "in which year was {M} published"],
    inv: &["which movies were released in {X}", "what films have the publication year {X}", "films published in {X}"],
    set: &["the films released in {X}", "the films published in {X}", "the movies with publication year {X}"],
    attr: &["when were {S} released", "what is the publication year of {S}", "in which year were {S} published"],
    same: &["which films were released in the same year as {M}", "what movies share the publication year of {M}", "which films were published in the year of {M}"],
    share: &[],
    ask: &["was {M} released in {X}", "is the publication year of {M} {X}", "was {M} published in {X}"],
    count_inv: &["how many films were released in {X}", "how many movies were published in {X}", "count the films with publication year {X}"],
    count_fwd: &[],
};

const B_TAGS: RelLex = RelLex {
    fwd: &["what is {M} about", "what is the main subject of {M}", "name the main subject of {M}"],
    inv: &["which movies are about {X}", "what films have the main subject {X}", "films whose main subject is {X}"],
    set: &["the films about {X}", "the films whose main subject is {X}", "the movies with main subject {X}"],
    attr: &["what are {S} about", "what is the main subject of {S}", "name the main subject of {S}"],
    same: &["which films are about the same topics as {M}", "what movies share the main subject of {M}", "which films have a main subject in common with {M}"],
    share: &[],
    ask: &["is {M} about {X}", "is the main subject of {M} {X}", "does {M} have the main subject {X}"],
    count_inv: &["how many films are about {X}", "how many movies have the main subject {X}", "count the films whose main subject is {X}"],
    count_fwd: &["how many tags does {M} have", "how many main subjects does {M} have"],
};

const B_RATING: RelLex = RelLex {
    fwd: &["what is the imdb rating of {M}", "how is {M} rated", "name the imdb rating of {M}"],
    inv: &["which movies are rated {X}", "what films have an imdb rating of {X}", "films whose imdb rating is {X}"],
    set: &["the films rated {X}", "the films whose imdb rating is {X}", "the movies with imdb rating {X}"],
    attr: &["how are {S} rated", "what is the imdb rating of {S}", "name the imdb rating of {S}"],
    same: &["which films have the same imdb rating as {M}", "what movies share the imdb rating of {M}", "which films have the imdb rating of {M}"],
    share: &[],
    ask: &["is {M} rated {X}", "is the imdb rating of {M} {X}", "does {M} have the imdb rating {X}"],
    count_inv: &["how many films are rated {X}", "how many movies have an imdb rating of {X}", "count the films whose imdb rating is {X}"],
    count_fwd: &[],
};

const B_VOTES: RelLex = RelLex {
    fwd: &["how popular is {M}", "what is the number of imdb votes of {M}", "name the number of imdb votes of {M}"],
    inv: &["which movies are {X} on imdb", "what films have {X} imdb votes", "films whose number of imdb votes is {X}"],
    set: &["the films that are {X} on imdb", "the films whose number of imdb votes is {X}", "the movies with {X} imdb votes"],
    attr: &["how popular are {S}", "what is the number of imdb votes of {S}", "name the number of imdb votes of {S}"],
    same: &["which films are as popular as {M}", "what movies share the number of imdb votes of {M}", "which films have the imdb votes of {M}"],
    share: &[],
    ask: &["is {M} {X} on imdb", "is the number of imdb votes of {M} {X}", "does {M} have {X} imdb votes"],
    count_inv: &["how many films are {X} on imdb", "how many movies have {X} imdb votes", "count the films whose number of imdb votes is {X}"],
    count_fwd: &[],
};

pub(crate) fn lexicon(profile: Profile, rel: Rel) -> &'static RelLex {
    use Rel::*;
    match (profile, rel) {
        (Profile::MovieA, DirectedBy) => &A_DIRECTED,
        (Profile::MovieA, StarredActors) => &A_STARRED,
        (Profile::MovieA, WrittenBy) => &A_WRITTEN,
        (Profile::MovieA, InLanguage) => &A_LANGUAGE,
        (Profile::MovieA, HasGenre) => &A_GENRE,
        (Profile::MovieA, ReleaseYear) => &A_YEAR,
        (Profile::MovieA, HasTags) => &A_TAGS,
        (Profile::MovieA, HasImdbRating) => &A_RATING,
        (Profile::MovieA, HasImdbVotes) => &A_VOTES,
        (Profile::MovieB, DirectedBy) => &B_DIRECTED,
        (Profile::MovieB, StarredActors) => &B_STARRED,
        (Profile::MovieB, WrittenBy) => &B_WRITTEN,
        (Profile::MovieB, InLanguage) => &B_LANGUAGE,
        (Profile::MovieB, HasGenre) => &B_GENRE,
        (Profile::MovieB, ReleaseYear) => &B_YEAR,
        (Profile::MovieB, HasTags) => &B_TAGS,
        (Profile::MovieB, HasImdbRating) => &B_RATING,
        (Profile::MovieB, HasImdbVotes) => &B_VOTES,
    }
}

pub(crate) const FIRST_NAMES: &[&str] = &[
    "Adrian", "Beatrice", "Cyrus", "Delphine", "Emil", "Fiona", "Gideon", "Harriet", "Ivo", "Juliette", "Kasimir",
    "Leonora", "Magnus", "Nadia", "Oskar", "Priya", "Quentin", "Rosalind", "Sebastian", "Tamsin", "Ulrich", "Vivian",
    "Wendell", "Ximena", "Yusuf", "Zelda", "Anselm", "Bronwen", "Cormac", "Dagny", "Evander", "Florence", "Gustav",
    "Hermione", "Ignatius", "Jolene", "Konrad", "Lucinda", "Mortimer", "Ottoline",
];

pub(crate) const LAST_NAMES: &[&str] = &[
    "Abernathy", "Blackwood", "Castellano", "Dunmore", "Eriksen", "Fairbanks", "Grimaldi", "Holloway", "Ingram",
    "Jablonski", "Kowalczyk", "Lindqvist", "Montague", "Nakamura", "Okonkwo", "Pemberton", "Quimby", "Rasmussen",
    "Sinclair", "Thornbury", "Underhill", "Vasquez", "Whitlock", "Yardley", "Zeller", "Ashcombe", "Brannigan",
    "Calloway", "Delacroix", "Everhart", "Fitzroy", "Galbraith", "Hargreave", "Isherwood", "Kettleby", "Lockhart",
    "Marchetti", "Northcott", "Ollivander", "Prendergast",
];

pub(crate) const TITLE_ADJECTIVES: &[&str] = &[
    "Silent", "Crimson", "Broken", "Golden", "Hidden", "Frozen", "Burning", "Lost", "Wild", "Distant", "Hollow",
    "Scarlet", "Restless", "Velvet", "Iron", "Pale", "Savage", "Gentle", "Endless", "Bitter", "Secret", "Shattered",
    "Wandering", "Midnight", "Electric", "Ancient", "Emerald", "Fading", "Quiet", "Radiant",
];

pub(crate) const TITLE_NOUNS: &[&str] = &[
    "Harbor", "River", "Empire", "Garden", "Mirror", "Horizon", "Kingdom", "Shadow", "Voyage", "Summer", "Lantern",
    "Orchard", "Citadel", "Meadow", "Compass", "Tide", "Frontier", "Cathedral", "Ember", "Labyrinth", "Canyon",
    "Monsoon", "Carousel", "Lighthouse", "Sparrow", "Avalanche", "Serenade", "Tapestry", "Glacier", "Requiem",
];

pub(crate) const LANGUAGES: &[&str] = &[
    "English", "French", "Spanish", "German", "Italian", "Japanese", "Korean", "Hindi", "Russian", "Swedish",
];

pub(crate) const GENRES: &[&str] = &[
    "Drama", "Comedy", "Horror", "Thriller", "Western", "Romance", "Animation", "Documentary", "Musical", "Fantasy",
];

pub(crate) const TAGS: &[&str] = &[
    "time travel", "zombies", "heist", "outer space", "dystopia", "friendship", "revenge", "robots", "pirates",
    "vampires", "dragons", "espionage", "boxing", "chess", "volcanoes", "submarines", "circus", "jazz", "wrestling",
    "samurai", "cowboys", "aliens", "treasure hunt", "ghosts",
];

pub(crate) const RATINGS: &[&str] = &["excellent", "good", "average", "mediocre", "poor"];

pub(crate) const VOTES: &[&str] = &["famous", "obscure", "acclaimed", "overlooked"];
