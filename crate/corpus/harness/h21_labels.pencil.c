void two_updates(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++) {
s1: A[i] = A[i] + 1;
s2: B[i] = A[i] * B[i];
  }
}
