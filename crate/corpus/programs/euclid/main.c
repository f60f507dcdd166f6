int gcd(int a, int b);
int collatz(int n, int limit);

int main(int a, int b) {
    int g = gcd(a, b);
    int c = collatz(1 + (a & 1023), 150);
    return g * 256 + c;
}
